#include <limits>
#include <map>
#include <unordered_map>

#include "twist/text.hpp"

namespace twist {

namespace {

using Symbols = std::vector<std::string>;

// Left-to-right, non-overlapping.
void merge_pair(Symbols& symbols, const std::string& left, const std::string& right) {
  Symbols merged;
  merged.reserve(symbols.size());
  for (std::size_t i = 0; i < symbols.size();) {
    if (i + 1 < symbols.size() && symbols[i] == left && symbols[i + 1] == right) {
      merged.push_back(left + right);
      i += 2;
    } else {
      merged.push_back(std::move(symbols[i]));
      ++i;
    }
  }
  symbols = std::move(merged);
}

std::string pair_key(const std::string& left, const std::string& right) {
  std::string key;
  key.reserve(left.size() + right.size() + 1);
  key += left;
  key += '\0';
  key += right;
  return key;
}

}  // namespace

std::vector<std::string> apply_bpe_word(std::string_view word, const std::vector<BpeMerge>& merges) {
  Symbols symbols = utf8_chars(word);
  if (symbols.size() < 2 || merges.empty()) return symbols;

  std::unordered_map<std::string, std::size_t> rank;
  rank.reserve(merges.size());
  for (std::size_t r = 0; r < merges.size(); ++r) rank.emplace(pair_key(merges[r].first, merges[r].second), r);

  // Merges run strictly in list order: once merge r has been applied, no
  // merge ranked before r is considered again.
  std::size_t next = 0;
  constexpr auto kNone = std::numeric_limits<std::size_t>::max();
  while (symbols.size() > 1) {
    std::size_t best = kNone;
    for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
      auto it = rank.find(pair_key(symbols[i], symbols[i + 1]));
      if (it != rank.end() && it->second >= next && it->second < best) best = it->second;
    }
    if (best == kNone) break;
    merge_pair(symbols, merges[best].first, merges[best].second);
    next = best + 1;
  }
  return symbols;
}

BpeScheme learn_bpe(const std::vector<std::string>& corpus, std::size_t num_merges, std::string marker) {
  if (corpus.empty()) throw TextError("cannot learn BPE merges from an empty corpus");

  std::map<std::string, std::size_t> word_counts;
  for (const auto& line : corpus) {
    if (!marker.empty() && line.find(marker) != std::string::npos)
      throw TextError("corpus contains the continuation marker '" + marker + "'");
    for (auto& w : split_words(normalize_whitespace(line))) ++word_counts[w];
  }

  std::vector<std::pair<Symbols, std::size_t>> words;
  words.reserve(word_counts.size());
  for (const auto& [w, c] : word_counts) words.emplace_back(utf8_chars(w), c);

  BpeScheme scheme;
  scheme.marker = std::move(marker);
  for (std::size_t m = 0; m < num_merges; ++m) {
    std::map<BpeMerge, std::size_t> pair_counts;
    for (const auto& [symbols, count] : words)
      for (std::size_t i = 0; i + 1 < symbols.size(); ++i) pair_counts[{symbols[i], symbols[i + 1]}] += count;
    if (pair_counts.empty()) break;

    // Map order makes the first maximum the lexicographically smallest pair.
    auto best = pair_counts.begin();
    for (auto it = pair_counts.begin(); it != pair_counts.end(); ++it)
      if (it->second > best->second) best = it;

    BpeMerge merge = best->first;
    for (auto& [symbols, _] : words) merge_pair(symbols, merge.first, merge.second);
    scheme.merges.push_back(std::move(merge));
  }
  return scheme;
}

}  // namespace twist
