#pragma once

#include "devbo/bo_engine.hpp"

#include <nlohmann/json.hpp>

#include <netdb.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>

// Remote black box over newline-delimited JSON on a TCP stream.
//   request:  {"run_id": str, "iter": int, "params_natural": [...]}
//   response: {"score": float, "elapsed_sec": float}
namespace devbo::remote {

class RemoteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Reply {
  double score;
  double elapsed_sec;
};

inline nlohmann::json make_request(const std::string& run_id, std::size_t iter,
                                   const std::vector<double>& natural) {
  return {{"run_id", run_id}, {"iter", iter}, {"params_natural", natural}};
}

inline Reply parse_reply(const std::string& line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw RemoteError(std::string("remote: malformed reply: ") + e.what());
  }
  if (!j.is_object() || !j.contains("score") || !j["score"].is_number())
    throw RemoteError("remote: reply lacks a numeric score: " + line);
  return {j["score"].get<double>(), j.value("elapsed_sec", 0.0)};
}

// Owns a connected socket; reads are bounded by a timeout.
class LineChannel {
 public:
  explicit LineChannel(int fd) : fd_(fd) {}
  LineChannel(const LineChannel&) = delete;
  LineChannel& operator=(const LineChannel&) = delete;
  LineChannel(LineChannel&& o) noexcept : fd_(std::exchange(o.fd_, -1)), buffer_(std::move(o.buffer_)) {}
  ~LineChannel() {
    if (fd_ >= 0) ::close(fd_);
  }

  // "host:port"
  static LineChannel connect(const std::string& address) {
    const auto colon = address.rfind(':');
    if (colon == std::string::npos) throw RemoteError("remote: address must be host:port");
    const std::string host = address.substr(0, colon);
    const std::string port = address.substr(colon + 1);
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (const int rc = ::getaddrinfo(host.c_str(), port.c_str(), &hints, &res); rc != 0)
      throw RemoteError("remote: cannot resolve " + address + ": " + ::gai_strerror(rc));
    std::unique_ptr<addrinfo, decltype(&::freeaddrinfo)> guard(res, ::freeaddrinfo);
    for (addrinfo* ai = res; ai; ai = ai->ai_next) {
      const int fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol);
      if (fd < 0) continue;
      if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) return LineChannel(fd);
      ::close(fd);
    }
    throw RemoteError("remote: cannot connect to " + address);
  }

  void send_line(const std::string& line) {
    std::string data = line + '\n';
    std::size_t off = 0;
    while (off < data.size()) {
      const ssize_t n = ::send(fd_, data.data() + off, data.size() - off, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw RemoteError(std::string("remote: send failed: ") + std::strerror(errno));
      }
      off += static_cast<std::size_t>(n);
    }
  }

  std::string read_line(std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
      if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        return line;
      }
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
          deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) throw RemoteError("remote: timed out waiting for reply");
      pollfd p{fd_, POLLIN, 0};
      const int rc = ::poll(&p, 1, static_cast<int>(left.count()));
      if (rc < 0) {
        if (errno == EINTR) continue;
        throw RemoteError(std::string("remote: poll failed: ") + std::strerror(errno));
      }
      if (rc == 0) continue;
      char chunk[4096];
      const ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw RemoteError(std::string("remote: recv failed: ") + std::strerror(errno));
      }
      if (n == 0) throw RemoteError("remote: connection closed by peer");
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

 private:
  int fd_;
  std::string buffer_;
};

// Objective adapter; one connection shared by all evaluations of a run.
class RemoteObjective {
 public:
  RemoteObjective(const std::string& address, std::chrono::milliseconds timeout)
      : channel_(std::make_shared<LineChannel>(LineChannel::connect(address))), timeout_(timeout) {}

  double operator()(const EvalRequest& req) {
    channel_->send_line(make_request(req.run_id, req.iteration, req.params_natural).dump());
    const Reply r = parse_reply(channel_->read_line(timeout_));
    last_elapsed_ = r.elapsed_sec;
    return r.score;
  }

  double last_elapsed() const { return last_elapsed_; }

 private:
  std::shared_ptr<LineChannel> channel_;
  std::chrono::milliseconds timeout_;
  double last_elapsed_ = 0.0;
};

}  // namespace devbo::remote
