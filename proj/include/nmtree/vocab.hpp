#ifndef NMTREE_VOCAB_HPP
#define NMTREE_VOCAB_HPP

#include <algorithm>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "nmtree/parse_tree.hpp"

namespace nmtree {

inline constexpr std::size_t kOov = 0;
inline const std::string kOovToken = "<unk>";

// String -> index map with index 0 reserved for out-of-vocabulary items.
class SymbolMap {
 public:
  SymbolMap() : items_{kOovToken} { index_.emplace(kOovToken, kOov); }

  explicit SymbolMap(const std::vector<std::string>& items) : SymbolMap() {
    if (items.empty() || items[0] != kOovToken)
      throw std::invalid_argument("SymbolMap: first item must be " + kOovToken);
    for (std::size_t i = 1; i < items.size(); ++i) add(items[i]);
  }

  std::size_t add(const std::string& s) {
    auto [it, inserted] = index_.emplace(s, items_.size());
    if (inserted) items_.push_back(s);
    return it->second;
  }

  std::size_t lookup(const std::string& s) const {
    auto it = index_.find(s);
    return it == index_.end() ? kOov : it->second;
  }

  bool contains(const std::string& s) const { return index_.count(s) && s != kOovToken; }
  std::size_t size() const { return items_.size(); }
  const std::vector<std::string>& items() const { return items_; }
  const std::string& at(std::size_t i) const { return items_.at(i); }

  bool operator==(const SymbolMap& o) const { return items_ == o.items_; }

 private:
  std::vector<std::string> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct Vocabulary {
  SymbolMap words;
  SymbolMap pos;
  SymbolMap deps;

  bool operator==(const Vocabulary&) const = default;
};

struct NodeIndices {
  std::size_t word = kOov;
  std::size_t pos = kOov;
  std::size_t dep = kOov;

  bool operator==(const NodeIndices&) const = default;
};

namespace detail {

inline SymbolMap threshold_map(const std::map<std::string, std::size_t>& counts,
                               std::size_t min_count) {
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (const auto& [s, c] : counts)
    if (c >= min_count && s != kOovToken) kept.emplace_back(s, c);
  // std::map input is already lexicographic, so a stable sort by count keeps ties ordered.
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  SymbolMap m;
  for (const auto& [s, _] : kept) m.add(s);
  return m;
}

}  // namespace detail

inline Vocabulary build_vocab(const std::vector<ParseTree>& corpus, std::size_t min_count = 2) {
  if (corpus.empty()) throw std::invalid_argument("build_vocab: empty corpus");
  std::map<std::string, std::size_t> wc, pc, dc;
  for (const auto& tree : corpus)
    for (const auto& t : tree.nodes) {
      ++wc[t.word];
      ++pc[t.pos];
      ++dc[t.dep];
    }
  return Vocabulary{detail::threshold_map(wc, min_count), detail::threshold_map(pc, min_count),
                    detail::threshold_map(dc, min_count)};
}

inline NodeIndices encode_node(const Vocabulary& vocab, const Token& token) {
  return {vocab.words.lookup(token.word), vocab.pos.lookup(token.pos), vocab.deps.lookup(token.dep)};
}

inline std::vector<NodeIndices> encode_tree(const Vocabulary& vocab, const ParseTree& tree) {
  std::vector<NodeIndices> out;
  out.reserve(tree.size());
  for (const auto& t : tree.nodes) out.push_back(encode_node(vocab, t));
  return out;
}

}  // namespace nmtree

#endif  // NMTREE_VOCAB_HPP
