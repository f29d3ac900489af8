#pragma once

// Vocabularies, tokenization schemes and conversion of token sequences
// between two models' text interfaces.

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

namespace twist {

using TokenId = std::int32_t;

inline constexpr TokenId kBos = 0;
inline constexpr TokenId kEos = 1;
inline constexpr TokenId kUnk = 2;

inline constexpr std::string_view kBosToken = "<s>";
inline constexpr std::string_view kEosToken = "</s>";
inline constexpr std::string_view kUnkToken = "<unk>";

/// Malformed input to the text pipeline: bad vocabulary or merges file,
/// corpus that contains the continuation marker, dangling marker on detokenize.
class TextError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller broke a precondition (sequence bound to the wrong spec, BOS inside a
/// sequence, ...). Signals a programming error rather than bad data.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Ordered token inventory. Ids 0, 1, 2 are always BOS, EOS and UNK.
class Vocabulary {
 public:
  /// Reserved entries only.
  Vocabulary();

  /// `entries` must start with the three reserved tokens and be duplicate-free.
  static Vocabulary from_entries(std::vector<std::string> entries);

  /// Reserved tokens followed by `tokens` (duplicates and reserved strings skipped).
  static Vocabulary from_tokens(const std::vector<std::string>& tokens);

  std::size_t size() const { return entries_.size(); }
  const std::string& token(TokenId id) const;
  std::optional<TokenId> find(std::string_view token) const;
  /// Id of `token`, or UNK.
  TokenId encode(std::string_view token) const;
  bool contains(TokenId id) const { return id >= 0 && static_cast<std::size_t>(id) < entries_.size(); }
  const std::vector<std::string>& entries() const { return entries_; }

  /// FNV-1a over every entry followed by '\n'.
  std::uint64_t fingerprint() const;

  bool operator==(const Vocabulary& other) const { return entries_ == other.entries_; }

 private:
  explicit Vocabulary(std::vector<std::string> entries, bool);
  std::vector<std::string> entries_;
  std::unordered_map<std::string, TokenId> index_;
};

struct WhitespaceScheme {
  /// Split English clitics ("does n't", "John 's") off their host word and
  /// re-attach them on detokenize.
  bool split_contractions = false;
  bool operator==(const WhitespaceScheme&) const = default;
};

/// One token per code point; spaces become kSpaceToken.
struct CharacterScheme {
  static constexpr std::string_view kSpaceToken = "\xe2\x96\x81";  // U+2581
  bool operator==(const CharacterScheme&) const = default;
};

using BpeMerge = std::pair<std::string, std::string>;

struct BpeScheme {
  /// Applied in list order.
  std::vector<BpeMerge> merges;
  /// Suffix appended to every non-final subword of a word.
  std::string marker = "@@";
  bool operator==(const BpeScheme&) const = default;
};

using TokenizationScheme = std::variant<WhitespaceScheme, CharacterScheme, BpeScheme>;

enum class GenerationOrder { LeftToRight, RightToLeft };

std::string_view to_string(GenerationOrder order);
GenerationOrder parse_generation_order(std::string_view text);
std::string scheme_name(const TokenizationScheme& scheme);

using SpecId = std::uint64_t;

/// A model's text interface. Immutable; share through SpecPtr.
class ModelTextSpec {
 public:
  ModelTextSpec(Vocabulary vocabulary, TokenizationScheme scheme,
                GenerationOrder order = GenerationOrder::LeftToRight);

  const Vocabulary& vocabulary() const { return vocabulary_; }
  const TokenizationScheme& scheme() const { return scheme_; }
  GenerationOrder order() const { return order_; }
  /// Content hash over vocabulary, scheme and order; equal specs share an id.
  SpecId id() const { return id_; }

 private:
  Vocabulary vocabulary_;
  TokenizationScheme scheme_;
  GenerationOrder order_;
  SpecId id_;
};

using SpecPtr = std::shared_ptr<const ModelTextSpec>;

SpecPtr make_spec(Vocabulary vocabulary, TokenizationScheme scheme,
                  GenerationOrder order = GenerationOrder::LeftToRight);

/// Token ids valid under one spec. BOS is implicit and never stored.
struct TokenSequence {
  std::vector<TokenId> ids;
  SpecId spec = 0;

  bool ends_with_eos() const { return !ids.empty() && ids.back() == kEos; }
  bool operator==(const TokenSequence&) const = default;
};

/// Throws ContractError unless `seq` is bound to `spec`, has no BOS, only a
/// final EOS, and in-range ids.
void validate(const TokenSequence& seq, const ModelTextSpec& spec);

/// Collapse runs of whitespace to single spaces and trim the ends.
std::string normalize_whitespace(std::string_view text);

/// Split a UTF-8 string into code points (invalid bytes pass through singly).
std::vector<std::string> utf8_chars(std::string_view text);

std::vector<std::string> split_words(std::string_view text);

std::vector<std::string> tokenize(std::string_view text, const TokenizationScheme& scheme);
std::string detokenize(const std::vector<std::string>& tokens, const TokenizationScheme& scheme);

/// Surface text -> ids in generation order (no EOS).
TokenSequence encode_text(std::string_view text, const ModelTextSpec& spec);
/// Ids in generation order -> surface text. A trailing EOS is ignored.
std::string decode_text(const TokenSequence& seq, const ModelTextSpec& spec);

/// Re-express `seq` (bound to `from`) under `to`: reverse if needed,
/// detokenize, retokenize, reverse if needed, encode with UNK fallback.
/// A trailing EOS is stripped and not re-added.
TokenSequence map_output(const TokenSequence& seq, const ModelTextSpec& from, const ModelTextSpec& to);

/// Vocabulary holding every token `scheme` produces over `corpus`, ordered by
/// descending frequency then byte order.
Vocabulary build_vocabulary(const std::vector<std::string>& corpus, const TokenizationScheme& scheme);

// Line-oriented files: one token per line; one "left<TAB>right" merge per line.
void save_vocabulary(const Vocabulary& vocabulary, const std::string& path);
Vocabulary load_vocabulary(const std::string& path);
void save_merges(const std::vector<BpeMerge>& merges, const std::string& path);
std::vector<BpeMerge> load_merges(const std::string& path);

/// Greedy pair merging; most frequent adjacent pair first, ties to the
/// smaller (left, right). Stops early once no pair is left.
BpeScheme learn_bpe(const std::vector<std::string>& corpus, std::size_t num_merges,
                    std::string marker = "@@");

/// Subword split of one word (no markers attached).
std::vector<std::string> apply_bpe_word(std::string_view word, const std::vector<BpeMerge>& merges);

}  // namespace twist
