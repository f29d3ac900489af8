#include "twist/remote_scorer.hpp"

#include <netdb.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstdio>
#include <cstring>

#include "twist/persist.hpp"

namespace twist {

using nlohmann::json;

std::string vocabulary_hash(const Vocabulary& vocabulary) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(vocabulary.fingerprint()));
  return buf;
}

// ---------------------------------------------------------------- LineChannel

LineChannel::LineChannel(int read_fd, int write_fd, pid_t child)
    : read_fd_(read_fd), write_fd_(write_fd), child_(child) {}

LineChannel::~LineChannel() {
  if (write_fd_ >= 0 && write_fd_ != read_fd_) ::close(write_fd_);
  if (read_fd_ >= 0) ::close(read_fd_);
  if (child_ > 0) {
    int status = 0;
    ::waitpid(child_, &status, 0);
  }
}

void LineChannel::send(const std::string& line) {
  std::string data = line + '\n';
  std::size_t sent = 0;
  while (sent < data.size()) {
    ssize_t n = ::send(write_fd_, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) throw RemoteError(std::string("bridge write failed: ") + std::strerror(errno));
    sent += static_cast<std::size_t>(n);
  }
}

std::string LineChannel::receive() {
  while (true) {
    auto nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return line;
    }
    char chunk[4096];
    ssize_t n = ::read(read_fd_, chunk, sizeof chunk);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) throw RemoteError("bridge connection closed");
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

std::unique_ptr<LineChannel> LineChannel::connect_tcp(const std::string& address) {
  auto colon = address.rfind(':');
  if (colon == std::string::npos) throw RemoteError("bridge address must be host:port, got '" + address + "'");
  const std::string host = address.substr(0, colon), port = address.substr(colon + 1);
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* found = nullptr;
  if (int rc = ::getaddrinfo(host.c_str(), port.c_str(), &hints, &found); rc != 0)
    throw RemoteError("cannot resolve " + address + ": " + ::gai_strerror(rc));
  int fd = -1;
  for (addrinfo* a = found; a; a = a->ai_next) {
    fd = ::socket(a->ai_family, a->ai_socktype, a->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, a->ai_addr, a->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(found);
  if (fd < 0) throw RemoteError("cannot connect to bridge at " + address);
  return std::make_unique<LineChannel>(fd, fd);
}

std::unique_ptr<LineChannel> LineChannel::spawn(const std::vector<std::string>& argv) {
  if (argv.empty()) throw RemoteError("empty bridge command");
  // A socket rather than pipes, so writes to a dead child fail with EPIPE
  // (MSG_NOSIGNAL) instead of raising SIGPIPE.
  int fds[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM, 0, fds) != 0) throw RemoteError("socketpair failed");
  pid_t pid = ::fork();
  if (pid < 0) {
    ::close(fds[0]);
    ::close(fds[1]);
    throw RemoteError("fork failed");
  }
  if (pid == 0) {
    ::dup2(fds[1], STDIN_FILENO);
    ::dup2(fds[1], STDOUT_FILENO);
    ::close(fds[0]);
    ::close(fds[1]);
    std::vector<char*> args;
    for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);
    ::execvp(args[0], args.data());
    std::_Exit(127);
  }
  ::close(fds[1]);
  return std::make_unique<LineChannel>(fds[0], fds[0], pid);
}

// ---------------------------------------------------------------- RemoteScorer

RemoteScorer::RemoteScorer(std::unique_ptr<LineChannel> channel, RemoteOptions options)
    : channel_(std::move(channel)), options_(std::move(options)) {
  json hello{{"v", kProtocolVersion}, {"type", "hello"}, {"session", options_.session}};
  if (options_.preloaded_vocabulary) hello["vocab_hash"] = vocabulary_hash(*options_.preloaded_vocabulary);
  json reply = exchange(std::move(hello), "hello");
  try {
    const auto server_hash = reply.at("vocab_hash").get<std::string>();
    std::optional<Vocabulary> vocab;
    if (options_.preloaded_vocabulary) {
      if (server_hash != vocabulary_hash(*options_.preloaded_vocabulary))
        throw SpecMismatchError("bridge vocabulary hash " + server_hash + " does not match the preloaded vocabulary");
      vocab = *options_.preloaded_vocabulary;
    } else {
      if (!reply.contains("vocabulary")) throw RemoteError("bridge sent neither vocabulary nor a matching hash");
      vocab = Vocabulary::from_entries(reply.at("vocabulary").get<std::vector<std::string>>());
      if (vocabulary_hash(*vocab) != server_hash) throw SpecMismatchError("bridge vocabulary does not match its hash");
    }
    spec_ = make_spec(std::move(*vocab), scheme_from_json(reply.at("scheme")),
                      parse_generation_order(reply.at("order").get<std::string>()));
    embeddings_ = reply.value("capabilities", json::object()).value("embeddings", false);
  } catch (const json::exception& e) {
    throw RemoteError(std::string("malformed bridge handshake: ") + e.what());
  } catch (const TextError& e) {
    throw RemoteError(std::string("malformed bridge handshake: ") + e.what());
  } catch (const PersistError& e) {
    throw RemoteError(std::string("malformed bridge handshake: ") + e.what());
  }
}

RemoteScorer::~RemoteScorer() {
  try {
    channel_->send(json{{"v", kProtocolVersion}, {"type", "close"}}.dump());
  } catch (const RemoteError&) {
  }
}

std::unique_ptr<RemoteScorer> RemoteScorer::connect(const std::string& address, RemoteOptions options) {
  return std::make_unique<RemoteScorer>(LineChannel::connect_tcp(address), std::move(options));
}

std::unique_ptr<RemoteScorer> RemoteScorer::spawn(const std::vector<std::string>& argv, RemoteOptions options) {
  return std::make_unique<RemoteScorer>(LineChannel::spawn(argv), std::move(options));
}

std::size_t RemoteScorer::requests() const {
  std::lock_guard lock(mutex_);
  return next_seq_ - 1;
}

json RemoteScorer::exchange(json request, std::string_view expected_type) const {
  std::lock_guard lock(mutex_);
  const auto seq = next_seq_++;
  request["seq"] = seq;
  channel_->send(request.dump());
  json reply;
  try {
    reply = json::parse(channel_->receive());
  } catch (const json::parse_error& e) {
    throw RemoteError(std::string("bridge sent invalid JSON: ") + e.what());
  }
  if (reply.value("v", 0) != kProtocolVersion) throw RemoteError("bridge speaks an unsupported protocol version");
  const auto type = reply.value("type", std::string());
  if (type == "error") throw RemoteError("bridge error: " + reply.value("message", std::string("(no message)")));
  if (type != expected_type) throw RemoteError("bridge replied '" + type + "' to a '" + std::string(expected_type) + "'");
  if (reply.value("seq", std::uint64_t{0}) != seq) throw RemoteError("bridge reply is out of sequence");
  return reply;
}

StepScores RemoteScorer::score_step(std::string_view source, std::span<const TokenId> prefix) const {
  const std::size_t vocab = spec_->vocabulary().size();
  const std::size_t top_n = options_.top_n == 0 ? vocab : options_.top_n;
  json reply = exchange({{"v", kProtocolVersion},
                         {"type", "score"},
                         {"session", options_.session},
                         {"source", std::string(source)},
                         {"prefix", std::vector<TokenId>(prefix.begin(), prefix.end())},
                         {"top_n", top_n}},
                        "scores");
  try {
    const double floor = reply.at("floor").is_null() ? kForbidden : reply.at("floor").get<double>();
    StepScores scores(vocab, floor);
    const auto& listed = reply.at("scores");
    if (listed.size() > top_n) throw RemoteError("bridge returned more scores than requested");
    for (const auto& entry : listed) {
      const auto id = entry.at(0).get<TokenId>();
      if (!spec_->vocabulary().contains(id)) throw RemoteError("bridge scored a token outside the vocabulary");
      const double s = entry.at(1).is_null() ? kForbidden : entry.at(1).get<double>();
      if (s < floor && s != kForbidden) throw RemoteError("bridge listed a score below its floor");
      scores[static_cast<std::size_t>(id)] = s;
    }
    scores[kBos] = kForbidden;
    return scores;
  } catch (const json::exception& e) {
    throw RemoteError(std::string("malformed bridge scores: ") + e.what());
  }
}

std::optional<std::vector<double>> RemoteScorer::embedding(TokenId id) const {
  if (!embeddings_) return std::nullopt;
  json reply = exchange({{"v", kProtocolVersion}, {"type", "embed"}, {"token", id}}, "embedding");
  try {
    return reply.at("vector").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw RemoteError(std::string("malformed bridge embedding: ") + e.what());
  }
}

}  // namespace twist
