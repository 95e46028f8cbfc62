#ifndef NMTREE_CONLLU_HPP
#define NMTREE_CONLLU_HPP

#include <charconv>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace nmtree {

struct Token {
  int index = 0;  // 1-based
  std::string word;
  std::string pos;
  int head = 0;  // 0 for the root
  std::string dep;

  bool operator==(const Token&) const = default;
};

using TokenSequence = std::vector<Token>;

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

namespace detail {

inline std::vector<std::string_view> split_tabs(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find('\t', start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? s.npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline bool parse_int(std::string_view s, int& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

}  // namespace detail

// Five tab-separated columns: ID FORM UPOS HEAD DEPREL. Blank lines separate
// sentences, '#' lines are comments, multiword ranges ("3-4") are skipped.
inline std::vector<TokenSequence> parse_conllu(std::string_view text) {
  std::vector<TokenSequence> sentences;
  TokenSequence current;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

    if (line.find_first_not_of(" \t") == std::string_view::npos) {
      if (!current.empty()) sentences.push_back(std::move(current));
      current.clear();
      if (end == text.size()) break;
      continue;
    }
    if (line.front() == '#') continue;

    auto cols = detail::split_tabs(line);
    if (cols[0].find('-') != std::string_view::npos || cols[0].find('.') != std::string_view::npos)
      continue;
    if (cols.size() < 5)
      throw ParseError(line_no, "expected 5 tab-separated columns, found " +
                                    std::to_string(cols.size()));
    Token tok;
    if (!detail::parse_int(cols[0], tok.index) || tok.index < 1)
      throw ParseError(line_no, "invalid token ID '" + std::string(cols[0]) + "'");
    if (!detail::parse_int(cols[3], tok.head) || tok.head < 0)
      throw ParseError(line_no, "invalid HEAD '" + std::string(cols[3]) + "'");
    tok.word = cols[1];
    tok.pos = cols[2];
    tok.dep = cols[4];
    current.push_back(std::move(tok));
    if (end == text.size()) break;
  }
  if (!current.empty()) sentences.push_back(std::move(current));
  return sentences;
}

inline std::string serialize_tokens(const TokenSequence& tokens) {
  std::ostringstream os;
  for (const auto& t : tokens)
    os << t.index << '\t' << t.word << '\t' << t.pos << '\t' << t.head << '\t' << t.dep << '\n';
  return os.str();
}

}  // namespace nmtree

#endif  // NMTREE_CONLLU_HPP
