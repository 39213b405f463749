#include "adgn/transport.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "adgn/protocol.hpp"

namespace adgn {

namespace {

struct Pipe {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<Bytes> queue[2];  // queue[i] is read by side i
  bool closed[2] = {false, false};
};

class InprocChannel : public Channel {
 public:
  InprocChannel(std::shared_ptr<Pipe> pipe, int side) : pipe_(std::move(pipe)), side_(side) {}
  ~InprocChannel() override { close(); }

  void send(std::span<const std::uint8_t> frame) override {
    {
      std::lock_guard lock(pipe_->mu);
      if (pipe_->closed[side_] || pipe_->closed[1 - side_]) {
        throw ConnectionClosed("in-process channel closed");
      }
      pipe_->queue[1 - side_].emplace_back(frame.begin(), frame.end());
    }
    pipe_->cv.notify_all();
  }

  std::optional<Bytes> receive(Millis timeout) override {
    std::unique_lock lock(pipe_->mu);
    auto& q = pipe_->queue[side_];
    const bool ready = pipe_->cv.wait_for(lock, timeout, [&] {
      return !q.empty() || pipe_->closed[1 - side_] || pipe_->closed[side_];
    });
    if (!q.empty()) {
      Bytes out = std::move(q.front());
      q.pop_front();
      return out;
    }
    if (ready) throw ConnectionClosed("in-process peer closed");
    return std::nullopt;
  }

  void close() override {
    {
      std::lock_guard lock(pipe_->mu);
      pipe_->closed[side_] = true;
    }
    pipe_->cv.notify_all();
  }

 private:
  std::shared_ptr<Pipe> pipe_;
  int side_;
};

std::string errno_text(const char* what) { return std::string(what) + ": " + std::strerror(errno); }

std::pair<std::string, std::string> split_addr(const std::string& addr) {
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos) throw std::invalid_argument("address must be host:port: " + addr);
  return {addr.substr(0, colon), addr.substr(colon + 1)};
}

class TcpChannel : public Channel {
 public:
  explicit TcpChannel(int fd) : fd_(fd) {
    int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  }
  ~TcpChannel() override { close(); }

  void send(std::span<const std::uint8_t> frame) override {
    std::lock_guard lock(send_mu_);
    std::size_t off = 0;
    while (off < frame.size()) {
      if (fd_ < 0) throw ConnectionClosed("tcp channel closed");
      const ssize_t n = ::send(fd_, frame.data() + off, frame.size() - off, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw ConnectionClosed(errno_text("send"));
      }
      off += static_cast<std::size_t>(n);
    }
  }

  std::optional<Bytes> receive(Millis timeout) override {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
      if (auto frame = take_frame()) return frame;
      if (fd_ < 0 || eof_) throw ConnectionClosed("tcp peer closed");
      const auto left = std::chrono::duration_cast<Millis>(deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0 && timeout.count() > 0) return std::nullopt;
      pollfd p{fd_, POLLIN, 0};
      const int rc = ::poll(&p, 1, static_cast<int>(std::max<long long>(left.count(), 0)));
      if (rc < 0) {
        if (errno == EINTR) continue;
        throw ConnectionClosed(errno_text("poll"));
      }
      if (rc == 0) return std::nullopt;
      std::uint8_t chunk[65536];
      const ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
      if (n < 0) {
        if (errno == EINTR || errno == EAGAIN) continue;
        throw ConnectionClosed(errno_text("recv"));
      }
      if (n == 0) {
        eof_ = true;
        continue;
      }
      buffer_.insert(buffer_.end(), chunk, chunk + n);
    }
  }

  void close() override {
    if (fd_ >= 0) {
      ::shutdown(fd_, SHUT_RDWR);
      ::close(fd_);
      fd_ = -1;
    }
  }

 private:
  std::optional<Bytes> take_frame() {
    if (buffer_.size() < kFrameHeaderSize) return std::nullopt;
    const FrameHeader h = decode_header(buffer_);
    if (h.payload_len > kMaxPayload) {
      close();
      throw ConnectionClosed("peer announced an oversized payload");
    }
    const std::size_t total = kFrameHeaderSize + h.payload_len;
    if (buffer_.size() < total) return std::nullopt;
    Bytes frame(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(total));
    buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(total));
    return frame;
  }

  int fd_;
  bool eof_ = false;
  Bytes buffer_;
  std::mutex send_mu_;
};

}  // namespace

std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> make_channel_pair() {
  auto pipe = std::make_shared<Pipe>();
  return {std::make_unique<InprocChannel>(pipe, 0), std::make_unique<InprocChannel>(pipe, 1)};
}

std::unique_ptr<Channel> InprocListener::connect() {
  auto [client, server] = make_channel_pair();
  {
    std::lock_guard lock(mu_);
    pending_.push_back(std::move(server));
  }
  cv_.notify_all();
  return std::move(client);
}

std::unique_ptr<Channel> InprocListener::accept(Millis timeout) {
  std::unique_lock lock(mu_);
  if (!cv_.wait_for(lock, timeout, [&] { return !pending_.empty(); })) return nullptr;
  auto out = std::move(pending_.front());
  pending_.pop_front();
  return out;
}

TcpListener::TcpListener(const std::string& bind_addr) {
  const auto [host, port] = split_addr(bind_addr);
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.empty() ? nullptr : host.c_str(), port.c_str(), &hints, &res) != 0 || !res) {
    throw std::runtime_error("cannot resolve bind address " + bind_addr);
  }
  fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (fd_ < 0) {
    ::freeaddrinfo(res);
    throw std::runtime_error(errno_text("socket"));
  }
  int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  const int rc = ::bind(fd_, res->ai_addr, res->ai_addrlen);
  ::freeaddrinfo(res);
  if (rc < 0 || ::listen(fd_, 64) < 0) {
    const std::string err = errno_text("bind/listen");
    ::close(fd_);
    throw std::runtime_error(err + " (" + bind_addr + ")");
  }
  sockaddr_in bound{};
  socklen_t len = sizeof bound;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.sin_port);
}

TcpListener::~TcpListener() {
  if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<Channel> TcpListener::accept(Millis timeout) {
  pollfd p{fd_, POLLIN, 0};
  const int rc = ::poll(&p, 1, static_cast<int>(timeout.count()));
  if (rc <= 0) return nullptr;
  const int client = ::accept(fd_, nullptr, nullptr);
  if (client < 0) return nullptr;
  return std::make_unique<TcpChannel>(client);
}

std::unique_ptr<Channel> tcp_connect(const std::string& addr) {
  const auto [host, port] = split_addr(addr);
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), port.c_str(), &hints, &res) != 0 || !res) {
    throw ConnectionClosed("cannot resolve " + addr);
  }
  const int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (fd < 0) {
    ::freeaddrinfo(res);
    throw ConnectionClosed(errno_text("socket"));
  }
  const int rc = ::connect(fd, res->ai_addr, res->ai_addrlen);
  ::freeaddrinfo(res);
  if (rc < 0) {
    const std::string err = errno_text("connect");
    ::close(fd);
    throw ConnectionClosed(err + " (" + addr + ")");
  }
  return std::make_unique<TcpChannel>(fd);
}

}  // namespace adgn
