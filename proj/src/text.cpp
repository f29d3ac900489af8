#include "twist/text.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <map>
#include <sstream>

#include "twist/hash.hpp"

namespace twist {

namespace {

constexpr std::array<std::string_view, 6> kApostropheClitics = {"'s", "'re", "'ve", "'ll", "'m", "'d"};
constexpr std::string_view kNegation = "n't";

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

bool is_clitic(std::string_view token) {
  if (token == kNegation) return true;
  return std::find(kApostropheClitics.begin(), kApostropheClitics.end(), token) != kApostropheClitics.end();
}

void split_clitic(const std::string& word, std::vector<std::string>& out) {
  if (word.size() > kNegation.size() && ends_with(word, kNegation)) {
    out.push_back(word.substr(0, word.size() - kNegation.size()));
    out.emplace_back(kNegation);
    return;
  }
  for (auto clitic : kApostropheClitics) {
    if (word.size() > clitic.size() && ends_with(word, clitic)) {
      out.push_back(word.substr(0, word.size() - clitic.size()));
      out.emplace_back(clitic);
      return;
    }
  }
  out.push_back(word);
}

std::string join_words(const std::vector<std::string>& words) {
  std::string text;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) text += ' ';
    text += words[i];
  }
  return text;
}

struct SchemeHasher {
  std::uint64_t state;
  void operator()(const WhitespaceScheme& s) {
    state = fnv1a(s.split_contractions ? "whitespace+clitics\n" : "whitespace\n", state);
  }
  void operator()(const CharacterScheme&) { state = fnv1a("character\n", state); }
  void operator()(const BpeScheme& s) {
    state = fnv1a("bpe\n", state);
    state = fnv1a(s.marker, state);
    state = fnv1a("\n", state);
    for (const auto& [left, right] : s.merges) {
      state = fnv1a(left, state);
      state = fnv1a("\t", state);
      state = fnv1a(right, state);
      state = fnv1a("\n", state);
    }
  }
};

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TextError("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

}  // namespace

// ---------------------------------------------------------------- Vocabulary

Vocabulary::Vocabulary() : Vocabulary({std::string(kBosToken), std::string(kEosToken), std::string(kUnkToken)}, true) {}

Vocabulary::Vocabulary(std::vector<std::string> entries, bool) : entries_(std::move(entries)) {
  index_.reserve(entries_.size());
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].empty()) throw TextError("vocabulary entry " + std::to_string(i) + " is empty");
    if (!index_.emplace(entries_[i], static_cast<TokenId>(i)).second)
      throw TextError("duplicate vocabulary entry '" + entries_[i] + "'");
  }
}

Vocabulary Vocabulary::from_entries(std::vector<std::string> entries) {
  if (entries.size() < 3 || entries[kBos] != kBosToken || entries[kEos] != kEosToken || entries[kUnk] != kUnkToken)
    throw TextError("vocabulary must begin with <s>, </s>, <unk>");
  return Vocabulary(std::move(entries), true);
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
  std::vector<std::string> entries{std::string(kBosToken), std::string(kEosToken), std::string(kUnkToken)};
  std::unordered_map<std::string, bool> seen;
  for (const auto& e : entries) seen[e] = true;
  for (const auto& t : tokens) {
    if (t.empty() || seen.count(t)) continue;
    seen[t] = true;
    entries.push_back(t);
  }
  return Vocabulary(std::move(entries), true);
}

const std::string& Vocabulary::token(TokenId id) const {
  if (!contains(id)) throw ContractError("token id " + std::to_string(id) + " outside vocabulary");
  return entries_[static_cast<std::size_t>(id)];
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

TokenId Vocabulary::encode(std::string_view token) const { return find(token).value_or(kUnk); }

std::uint64_t Vocabulary::fingerprint() const {
  std::uint64_t h = kFnvOffset;
  for (const auto& e : entries_) {
    h = fnv1a(e, h);
    h = fnv1a("\n", h);
  }
  return h;
}

// ---------------------------------------------------------------- Spec

std::string_view to_string(GenerationOrder order) {
  return order == GenerationOrder::LeftToRight ? "l2r" : "r2l";
}

GenerationOrder parse_generation_order(std::string_view text) {
  if (text == "l2r") return GenerationOrder::LeftToRight;
  if (text == "r2l") return GenerationOrder::RightToLeft;
  throw TextError("unknown generation order '" + std::string(text) + "'");
}

std::string scheme_name(const TokenizationScheme& scheme) {
  switch (scheme.index()) {
    case 0: return "whitespace";
    case 1: return "character";
    default: return "bpe";
  }
}

ModelTextSpec::ModelTextSpec(Vocabulary vocabulary, TokenizationScheme scheme, GenerationOrder order)
    : vocabulary_(std::move(vocabulary)), scheme_(std::move(scheme)), order_(order) {
  SchemeHasher hasher{vocabulary_.fingerprint()};
  std::visit(hasher, scheme_);
  id_ = fnv1a(to_string(order_), hasher.state);
}

SpecPtr make_spec(Vocabulary vocabulary, TokenizationScheme scheme, GenerationOrder order) {
  return std::make_shared<const ModelTextSpec>(std::move(vocabulary), std::move(scheme), order);
}

void validate(const TokenSequence& seq, const ModelTextSpec& spec) {
  if (seq.spec != spec.id()) throw ContractError("token sequence is bound to a different text spec");
  for (std::size_t i = 0; i < seq.ids.size(); ++i) {
    TokenId id = seq.ids[i];
    if (!spec.vocabulary().contains(id)) throw ContractError("token id " + std::to_string(id) + " outside vocabulary");
    if (id == kBos) throw ContractError("token sequence contains BOS");
    if (id == kEos && i + 1 != seq.ids.size()) throw ContractError("EOS before the end of a token sequence");
  }
}

// ---------------------------------------------------------------- Tokenization

std::string normalize_whitespace(std::string_view text) {
  std::string out;
  bool pending_space = false;
  for (char c : text) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    out += c;
  }
  return out;
}

std::vector<std::string> utf8_chars(std::string_view text) {
  std::vector<std::string> chars;
  std::size_t i = 0;
  while (i < text.size()) {
    auto lead = static_cast<unsigned char>(text[i]);
    std::size_t len = 1;
    if (lead >= 0xF0 && lead < 0xF8) len = 4;
    else if (lead >= 0xE0) len = lead < 0xF0 ? 3 : 1;
    else if (lead >= 0xC0) len = 2;
    if (i + len > text.size()) len = 1;
    for (std::size_t j = 1; j < len; ++j) {
      if ((static_cast<unsigned char>(text[i + j]) & 0xC0) != 0x80) {
        len = 1;
        break;
      }
    }
    chars.emplace_back(text.substr(i, len));
    i += len;
  }
  return chars;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  for (char c : text) {
    if (c == ' ') {
      if (!current.empty()) words.push_back(std::move(current));
      current.clear();
    } else {
      current += c;
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

std::vector<std::string> tokenize(std::string_view text, const TokenizationScheme& scheme) {
  std::vector<std::string> tokens;
  if (const auto* ws = std::get_if<WhitespaceScheme>(&scheme)) {
    for (auto& word : split_words(text)) {
      if (ws->split_contractions) split_clitic(word, tokens);
      else tokens.push_back(std::move(word));
    }
  } else if (std::holds_alternative<CharacterScheme>(scheme)) {
    for (auto& ch : utf8_chars(text)) {
      if (ch == " ") tokens.emplace_back(CharacterScheme::kSpaceToken);
      else tokens.push_back(std::move(ch));
    }
  } else {
    const auto& bpe = std::get<BpeScheme>(scheme);
    for (const auto& word : split_words(text)) {
      auto pieces = apply_bpe_word(word, bpe.merges);
      for (std::size_t i = 0; i + 1 < pieces.size(); ++i) tokens.push_back(pieces[i] + bpe.marker);
      tokens.push_back(std::move(pieces.back()));
    }
  }
  return tokens;
}

std::string detokenize(const std::vector<std::string>& tokens, const TokenizationScheme& scheme) {
  if (const auto* ws = std::get_if<WhitespaceScheme>(&scheme)) {
    std::string text;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (i && !(ws->split_contractions && is_clitic(tokens[i]))) text += ' ';
      text += tokens[i];
    }
    return text;
  }
  if (std::holds_alternative<CharacterScheme>(scheme)) {
    std::string text;
    for (const auto& t : tokens) text += t == CharacterScheme::kSpaceToken ? std::string(" ") : t;
    return text;
  }
  const auto& bpe = std::get<BpeScheme>(scheme);
  std::vector<std::string> words;
  std::string current;
  bool open = false;
  for (const auto& t : tokens) {
    if (!bpe.marker.empty() && ends_with(t, bpe.marker)) {
      current.append(t, 0, t.size() - bpe.marker.size());
      open = true;
    } else {
      current += t;
      words.push_back(std::move(current));
      current.clear();
      open = false;
    }
  }
  if (open) throw TextError("dangling continuation marker at end of sequence");
  return join_words(words);
}

TokenSequence encode_text(std::string_view text, const ModelTextSpec& spec) {
  auto tokens = tokenize(normalize_whitespace(text), spec.scheme());
  if (spec.order() == GenerationOrder::RightToLeft) std::reverse(tokens.begin(), tokens.end());
  TokenSequence seq{{}, spec.id()};
  seq.ids.reserve(tokens.size());
  for (const auto& t : tokens) {
    TokenId id = spec.vocabulary().encode(t);
    // Literal "<s>"/"</s>" text is content, never a control token.
    seq.ids.push_back(id == kBos || id == kEos ? kUnk : id);
  }
  return seq;
}

std::string decode_text(const TokenSequence& seq, const ModelTextSpec& spec) {
  validate(seq, spec);
  std::vector<std::string> tokens;
  tokens.reserve(seq.ids.size());
  for (TokenId id : seq.ids)
    if (id != kEos) tokens.push_back(spec.vocabulary().token(id));
  if (spec.order() == GenerationOrder::RightToLeft) std::reverse(tokens.begin(), tokens.end());
  return detokenize(tokens, spec.scheme());
}

TokenSequence map_output(const TokenSequence& seq, const ModelTextSpec& from, const ModelTextSpec& to) {
  validate(seq, from);
  TokenSequence out{seq.ids, to.id()};
  if (out.ends_with_eos()) out.ids.pop_back();
  // Same token inventory and segmentation: the only difference can be order.
  if (from.vocabulary() == to.vocabulary() && from.scheme() == to.scheme()) {
    if (from.order() != to.order()) std::reverse(out.ids.begin(), out.ids.end());
    return out;
  }
  return encode_text(decode_text(seq, from), to);
}

Vocabulary build_vocabulary(const std::vector<std::string>& corpus, const TokenizationScheme& scheme) {
  std::map<std::string, std::size_t> counts;
  for (const auto& line : corpus)
    for (auto& t : tokenize(normalize_whitespace(line), scheme)) ++counts[t];
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens;
  tokens.reserve(ranked.size());
  for (auto& [t, _] : ranked) tokens.push_back(t);
  return Vocabulary::from_tokens(tokens);
}

// ---------------------------------------------------------------- Files

void save_vocabulary(const Vocabulary& vocabulary, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw TextError("cannot write " + path);
  for (const auto& e : vocabulary.entries()) out << e << '\n';
}

Vocabulary load_vocabulary(const std::string& path) { return Vocabulary::from_entries(read_lines(path)); }

void save_merges(const std::vector<BpeMerge>& merges, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw TextError("cannot write " + path);
  for (const auto& [left, right] : merges) out << left << '\t' << right << '\n';
}

std::vector<BpeMerge> load_merges(const std::string& path) {
  std::vector<BpeMerge> merges;
  std::size_t line_no = 0;
  for (const auto& line : read_lines(path)) {
    ++line_no;
    auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 == line.size() || line.find('\t', tab + 1) != std::string::npos)
      throw TextError(path + ":" + std::to_string(line_no) + ": expected left<TAB>right");
    merges.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  return merges;
}

}  // namespace twist
