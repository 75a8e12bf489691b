#include "core/corpus.hpp"

#include <fstream>
#include <json.hpp>

#include "core/error.hpp"

namespace lrp4rag {

namespace {

using nlohmann::json;

std::string where(const std::string& source, std::size_t line) {
  return source + ":" + std::to_string(line) + ": ";
}

std::string required_string(const json& obj, const char* field, const std::string& at) {
  const auto it = obj.find(field);
  if (it == obj.end() || it->is_null()) fail(ErrorKind::kFormat, at + "missing required field \"" + std::string(field) + "\"");
  if (!it->is_string()) fail(ErrorKind::kFormat, at + "field \"" + std::string(field) + "\" must be a string");
  return it->get<std::string>();
}

std::size_t count_of(std::string_view text, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string_view::npos; pos = text.find(needle, pos + needle.size())) ++n;
  return n;
}

}  // namespace

std::vector<CorpusRecord> parse_corpus(std::istream& in, const std::string& source) {
  std::vector<CorpusRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string at = where(source, line_no);
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      fail(ErrorKind::kFormat, at + "invalid JSON: " + e.what());
    }
    if (!obj.is_object()) fail(ErrorKind::kFormat, at + "expected a JSON object");
    CorpusRecord rec;
    rec.id = required_string(obj, "id", at);
    rec.context = required_string(obj, "context", at);
    rec.question = required_string(obj, "question", at);
    rec.templ = required_string(obj, "template", at);
    if (count_of(rec.templ, "{C}") != 1 || count_of(rec.templ, "{Q}") != 1) {
      fail(ErrorKind::kFormat, at + "template must contain \"{C}\" and \"{Q}\" exactly once");
    }
    if (auto it = obj.find("response"); it != obj.end() && !it->is_null()) {
      if (!it->is_string()) fail(ErrorKind::kFormat, at + "field \"response\" must be a string");
      rec.response = it->get<std::string>();
    }
    if (auto it = obj.find("label"); it != obj.end() && !it->is_null()) {
      if (!it->is_boolean()) fail(ErrorKind::kFormat, at + "field \"label\" must be a boolean");
      rec.label = it->get<bool>();
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<CorpusRecord> load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open corpus " + path.string());
  return parse_corpus(in, path.string());
}

TokenSequence tokenize_words(std::string_view text, std::size_t vocab_size) {
  if (vocab_size < 2) fail(ErrorKind::kConfig, "tokenizer needs vocab_size >= 2");
  TokenSequence out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto begin = text.find_first_not_of(" \t\r\n", pos);
    if (begin == std::string_view::npos) break;
    auto end = text.find_first_of(" \t\r\n", begin);
    if (end == std::string_view::npos) end = text.size();
    std::uint64_t h = 14695981039346656037ULL;
    for (char ch : text.substr(begin, end - begin)) {
      h ^= static_cast<unsigned char>(ch);
      h *= 1099511628211ULL;
    }
    out.push_back(static_cast<TokenId>(1 + h % (vocab_size - 1)));
    pos = end;
  }
  return out;
}

TokenSequence tokenize_template(std::string_view templ, std::size_t vocab_size) {
  TokenSequence out;
  std::size_t pos = 0;
  while (pos <= templ.size()) {
    const auto c = templ.find("{C}", pos);
    const auto q = templ.find("{Q}", pos);
    const auto next = std::min(c, q);
    const auto piece = templ.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos);
    const auto words = tokenize_words(piece, vocab_size);
    out.insert(out.end(), words.begin(), words.end());
    if (next == std::string_view::npos) break;
    out.push_back(next == c ? kContextMarker : kQuestionMarker);
    pos = next + 3;
  }
  return out;
}

PromptParts prompt_parts(const CorpusRecord& record, std::size_t vocab_size) {
  return {tokenize_words(record.context, vocab_size), tokenize_words(record.question, vocab_size),
          tokenize_template(record.templ, vocab_size)};
}

}  // namespace lrp4rag
