#include "bridge_server.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>

#include "twist/persist.hpp"

namespace twist::testing {

using nlohmann::json;

namespace {

class FdLines {
 public:
  explicit FdLines(int fd) : fd_(fd) {}

  std::optional<std::string> next() {
    while (true) {
      auto nl = buffer_.find('\n');
      if (nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        return line;
      }
      char chunk[4096];
      ssize_t n = ::read(fd_, chunk, sizeof chunk);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) return std::nullopt;
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

 private:
  int fd_;
  std::string buffer_;
};

void write_line(int fd, const std::string& line) {
  std::string data = line + '\n';
  std::size_t sent = 0;
  while (sent < data.size()) {
    ssize_t n = ::write(fd, data.data() + sent, data.size() - sent);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return;
    sent += static_cast<std::size_t>(n);
  }
}

json error_reply(const json& seq, const std::string& message) {
  return {{"v", kProtocolVersion}, {"type", "error"}, {"seq", seq}, {"message", message}};
}

json score_reply(const Scorer& scorer, const json& request, const BridgeServeOptions& options) {
  const auto& vocab = scorer.spec().vocabulary();
  const auto prefix = request.at("prefix").get<std::vector<TokenId>>();
  for (TokenId id : prefix)
    if (!vocab.contains(id) || id == kBos || id == kEos) throw std::invalid_argument("prefix id out of range");
  std::size_t top_n = request.value("top_n", vocab.size());
  if (top_n == 0 || top_n > vocab.size()) top_n = vocab.size();

  const StepScores scores = scorer.score_step(request.value("source", std::string()), prefix);
  std::vector<TokenId> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<TokenId>(i);
  std::stable_sort(order.begin(), order.end(), [&](TokenId a, TokenId b) { return scores[a] > scores[b]; });
  order.resize(top_n);

  json listed = json::array();
  double lowest = std::numeric_limits<double>::infinity();
  for (TokenId id : order) {
    const double s = scores[static_cast<std::size_t>(id)];
    if (std::isinf(s)) {
      listed.push_back({id, nullptr});
    } else {
      listed.push_back({id, s});
      lowest = std::min(lowest, s);
    }
  }
  json floor = std::isinf(lowest) ? json(nullptr) : json(lowest - options.floor_margin);
  return {{"v", kProtocolVersion}, {"type", "scores"}, {"seq", request.at("seq")}, {"scores", listed}, {"floor", floor}};
}

}  // namespace

void serve_bridge(const Scorer& scorer, int in_fd, int out_fd, const BridgeServeOptions& options) {
  const auto& spec = scorer.spec();
  const std::string hash = options.hash_override.value_or(vocabulary_hash(spec.vocabulary()));
  bool corrupt = options.corrupt_first_score;
  FdLines lines(in_fd);
  while (auto line = lines.next()) {
    json request;
    try {
      request = json::parse(*line);
    } catch (const json::exception& e) {
      write_line(out_fd, error_reply(nullptr, std::string("malformed request: ") + e.what()).dump());
      continue;
    }
    const json seq = request.value("seq", json(nullptr));
    try {
      if (request.value("v", 0) != kProtocolVersion) {
        write_line(out_fd, error_reply(seq, "unsupported protocol version").dump());
        continue;
      }
      const auto type = request.value("type", std::string());
      if (type == "close") return;
      if (type == "hello") {
        json reply{{"v", kProtocolVersion},
                   {"type", "hello"},
                   {"seq", seq},
                   {"vocab_hash", hash},
                   {"scheme", scheme_to_json(spec.scheme())},
                   {"order", to_string(options.order_override.value_or(spec.order()))},
                   {"capabilities", {{"embeddings", scorer.has_embeddings()}}}};
        if (request.value("vocab_hash", std::string()) != hash) reply["vocabulary"] = spec.vocabulary().entries();
        write_line(out_fd, reply.dump());
      } else if (type == "score") {
        if (corrupt) {
          corrupt = false;
          write_line(out_fd, "this is not json");
          continue;
        }
        write_line(out_fd, score_reply(scorer, request, options).dump());
      } else if (type == "embed") {
        const auto id = request.at("token").get<TokenId>();
        auto vec = scorer.embedding(id);
        if (!vec) {
          write_line(out_fd, error_reply(seq, "embeddings not served").dump());
          continue;
        }
        write_line(out_fd,
                   json{{"v", kProtocolVersion}, {"type", "embedding"}, {"seq", seq}, {"token", id}, {"vector", *vec}}
                       .dump());
      } else {
        write_line(out_fd, error_reply(seq, "unknown request type '" + type + "'").dump());
      }
    } catch (const std::exception& e) {
      write_line(out_fd, error_reply(seq, e.what()).dump());
    }
  }
}

PairedBridge::PairedBridge(const Scorer& scorer, BridgeServeOptions options) {
  int fds[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM, 0, fds) != 0) throw std::runtime_error("socketpair failed");
  client_fd_ = fds[0];
  server_fd_ = fds[1];
  thread_ = std::thread([&scorer, options, fd = server_fd_] { serve_bridge(scorer, fd, fd, options); });
}

PairedBridge::~PairedBridge() {
  if (client_fd_ >= 0) ::close(client_fd_);
  ::shutdown(server_fd_, SHUT_RDWR);
  thread_.join();
  ::close(server_fd_);
}

std::unique_ptr<LineChannel> PairedBridge::take_channel() {
  auto channel = std::make_unique<LineChannel>(client_fd_, client_fd_);
  client_fd_ = -1;
  return channel;
}

TcpBridge::TcpBridge(const Scorer& scorer, BridgeServeOptions options) : scorer_(scorer), options_(std::move(options)) {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw std::runtime_error("socket failed");
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = 0;
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(listen_fd_, 16) != 0)
    throw std::runtime_error("bind/listen failed");
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  acceptor_ = std::thread([this] {
    while (!stop_) {
      int fd = ::accept(listen_fd_, nullptr, nullptr);
      if (fd < 0) {
        if (errno == EINTR) continue;
        return;
      }
      ++connections_;
      workers_.emplace_back([this, fd] {
        serve_bridge(scorer_, fd, fd, options_);
        ::close(fd);
      });
    }
  });
}

TcpBridge::~TcpBridge() {
  stop_ = true;
  ::shutdown(listen_fd_, SHUT_RDWR);
  acceptor_.join();
  ::close(listen_fd_);
  for (auto& w : workers_) w.join();
}

std::string TcpBridge::address() const { return "127.0.0.1:" + std::to_string(port_); }

}  // namespace twist::testing
