#pragma once

#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "core/transformer.hpp"

namespace lrp4rag {

// One JSONL line: {"id", "context", "question", "template", "response"?, "label"?}
struct CorpusRecord {
  std::string id;
  std::string context;
  std::string question;
  std::string templ;  // contains "{C}" and "{Q}" exactly once each
  std::optional<std::string> response;
  std::optional<bool> label;  // true = hallucinated
};

std::vector<CorpusRecord> parse_corpus(std::istream& in, const std::string& source = "<stream>");
std::vector<CorpusRecord> load_corpus(const std::filesystem::path& path);

// Convenience tokenizer: whitespace-separated words hashed (FNV-1a) into
// [1, vocab_size). Id 0 is left free for the stop token.
TokenSequence tokenize_words(std::string_view text, std::size_t vocab_size);

// Template text split at its markers, each marker replaced by its placeholder id.
TokenSequence tokenize_template(std::string_view templ, std::size_t vocab_size);

PromptParts prompt_parts(const CorpusRecord& record, std::size_t vocab_size);

}  // namespace lrp4rag
