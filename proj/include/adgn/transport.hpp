#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace adgn {

using Bytes = std::vector<std::uint8_t>;
using Millis = std::chrono::milliseconds;

class ConnectionClosed : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One end of an ordered, reliable, bidirectional frame link.
class Channel {
 public:
  virtual ~Channel() = default;
  virtual void send(std::span<const std::uint8_t> frame) = 0;
  /// Next whole frame, or nullopt on timeout. Throws ConnectionClosed once
  /// the peer is gone and nothing is left to read.
  virtual std::optional<Bytes> receive(Millis timeout) = 0;
  virtual void close() = 0;
};

class Listener {
 public:
  virtual ~Listener() = default;
  /// Next incoming connection, or nullptr on timeout.
  virtual std::unique_ptr<Channel> accept(Millis timeout) = 0;
};

/// Paired in-memory queues.
std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> make_channel_pair();

class InprocListener : public Listener {
 public:
  /// Client side of a new connection; the server half becomes available to accept().
  std::unique_ptr<Channel> connect();
  std::unique_ptr<Channel> accept(Millis timeout) override;

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::unique_ptr<Channel>> pending_;
};

/// "host:port"; port 0 asks the OS for a free port.
class TcpListener : public Listener {
 public:
  explicit TcpListener(const std::string& bind_addr);
  ~TcpListener() override;
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  std::unique_ptr<Channel> accept(Millis timeout) override;
  std::uint16_t port() const { return port_; }

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

/// Throws ConnectionClosed if the connection cannot be established.
std::unique_ptr<Channel> tcp_connect(const std::string& addr);

}  // namespace adgn
