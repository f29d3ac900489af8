#pragma once

// Client side of the scorer bridge protocol (docs/protocol.md): one JSON
// object per line over TCP or a child process's stdin/stdout.

#include <sys/types.h>

#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "twist/scoring.hpp"

namespace twist {

inline constexpr int kProtocolVersion = 1;

class RemoteError : public ScoringError {
 public:
  using ScoringError::ScoringError;
};

/// The server's vocabulary differs from the one the client preloaded.
class SpecMismatchError : public RemoteError {
 public:
  using RemoteError::RemoteError;
};

/// Hex rendering of Vocabulary::fingerprint(), as sent on the wire.
std::string vocabulary_hash(const Vocabulary& vocabulary);

/// Owns a pair of file descriptors (and optionally a child process) and
/// exchanges newline-terminated messages over them.
class LineChannel {
 public:
  LineChannel(int read_fd, int write_fd, pid_t child = -1);
  ~LineChannel();
  LineChannel(const LineChannel&) = delete;
  LineChannel& operator=(const LineChannel&) = delete;

  void send(const std::string& line);
  /// Throws RemoteError on EOF.
  std::string receive();

  static std::unique_ptr<LineChannel> connect_tcp(const std::string& address);
  static std::unique_ptr<LineChannel> spawn(const std::vector<std::string>& argv);

 private:
  int read_fd_;
  int write_fd_;
  pid_t child_;
  std::string buffer_;
};

struct RemoteOptions {
  /// Scores requested per step; 0 asks for the whole vocabulary.
  std::size_t top_n = 0;
  /// When set, only its hash is sent and the server must match it.
  std::optional<Vocabulary> preloaded_vocabulary;
  std::string session = "default";
};

/// Scorer whose step scores come from a bridge server. Tokens missing from a
/// truncated response score the response's floor value. Calls are
/// serialized; use one instance per concurrent decode stream.
class RemoteScorer final : public Scorer {
 public:
  RemoteScorer(std::unique_ptr<LineChannel> channel, RemoteOptions options);
  ~RemoteScorer() override;

  /// "host:port"
  static std::unique_ptr<RemoteScorer> connect(const std::string& address, RemoteOptions options = {});
  static std::unique_ptr<RemoteScorer> spawn(const std::vector<std::string>& argv, RemoteOptions options = {});

  const SpecPtr& spec_ptr() const override { return spec_; }
  StepScores score_step(std::string_view source, std::span<const TokenId> prefix) const override;
  std::optional<std::vector<double>> embedding(TokenId id) const override;
  bool has_embeddings() const override { return embeddings_; }

  std::size_t requests() const;

 private:
  nlohmann::json exchange(nlohmann::json request, std::string_view expected_type) const;

  mutable std::mutex mutex_;
  std::unique_ptr<LineChannel> channel_;
  RemoteOptions options_;
  SpecPtr spec_;
  bool embeddings_ = false;
  mutable std::uint64_t next_seq_ = 1;
};

}  // namespace twist
