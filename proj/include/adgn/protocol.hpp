#pragma once

#include <cstddef>
#include <cstdint>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "adgn/mixture.hpp"
#include "adgn/tensor.hpp"

namespace adgn {

// Wire format, all integers little-endian:
//
//   offset size field
//        0    4 magic "ADGN"
//        4    1 version (1)
//        5    1 msg_type
//        6    2 node_id
//        8    4 round
//       12    4 payload_len
//       16    . payload
//
// Tensor payload: u8 dtype (0 = f32), u8 ndim, u32 dims[ndim], f32 data.
// JOIN payload: u32 shard size. ROUND_BEGIN payload: u8 phase.
// JOIN_ACK and SHUTDOWN have empty payloads.

inline constexpr std::size_t kFrameHeaderSize = 16;
inline constexpr std::uint8_t kProtocolVersion = 1;
inline constexpr std::uint16_t kUnassignedNode = 0xFFFF;
// Upper bound accepted by stream readers before allocating a payload.
inline constexpr std::uint32_t kMaxPayload = 256u << 20;

enum class MsgType : std::uint8_t {
  kJoin = 0,
  kJoinAck = 1,
  kAuxBatch = 2,
  kFakeBatch = 3,
  kFakeGrad = 4,
  kDLoss = 5,
  kRoundBegin = 6,
  kShutdown = 7,
};

const char* msg_type_name(MsgType t);

enum class Phase : std::uint8_t {
  kDiscriminator = 0,  // nodes update their local D
  kGenerator = 1,      // nodes return the fake-batch gradient and loss
};

struct JoinBody {
  std::uint32_t shard_size = 0;
  friend bool operator==(const JoinBody&, const JoinBody&) = default;
};

struct RoundBeginBody {
  Phase phase = Phase::kDiscriminator;
  friend bool operator==(const RoundBeginBody&, const RoundBeginBody&) = default;
};

using Payload = std::variant<std::monostate, JoinBody, RoundBeginBody, Tensor>;

struct Message {
  MsgType type = MsgType::kJoin;
  std::uint16_t node_id = 0;
  std::uint32_t round = 0;
  Payload payload;

  friend bool operator==(const Message&, const Message&) = default;
};

Message make_join(std::uint32_t shard_size, std::uint16_t requested_id = kUnassignedNode);
Message make_join_ack(std::uint16_t node_id);
Message make_round_begin(std::uint16_t node_id, std::uint32_t round, Phase phase);
Message make_tensor_message(MsgType type, std::uint16_t node_id, std::uint32_t round, Tensor t);
Message make_shutdown(std::uint16_t node_id, std::uint32_t round);

enum class DecodeErrorCode {
  kBadMagic,
  kUnknownVersion,
  kUnknownType,
  kTruncated,
  kMalformedPayload,
};

class DecodeError : public std::runtime_error {
 public:
  DecodeError(DecodeErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  DecodeErrorCode code() const noexcept { return code_; }

 private:
  DecodeErrorCode code_;
};

/// Throws ContractViolation if the message breaks a type invariant (payload
/// kind for its type, D_LOSS not a single finite value).
std::vector<std::uint8_t> encode(const Message& msg);
/// Decodes exactly one complete frame. Never reads past payload_len.
Message decode(std::span<const std::uint8_t> bytes);

struct FrameHeader {
  std::uint8_t version = 0;
  std::uint8_t msg_type = 0;
  std::uint16_t node_id = 0;
  std::uint32_t round = 0;
  std::uint32_t payload_len = 0;
};
/// Parses the fixed header (magic and version checked, type not).
FrameHeader decode_header(std::span<const std::uint8_t> bytes);

// ---------------------------------------------------------------------------
// Communication accounting

struct CommBreakdown {
  std::uint64_t fake_batch = 0;  // dominant term: h*w*c*batch*bytes
  std::uint64_t aux_batch = 0;   // one single-channel mask per sample
  std::uint64_t loss = 0;        // one scalar
  std::uint64_t total() const { return fake_batch + aux_batch + loss; }
};

/// Bytes of one fake-batch transfer per node per iteration.
std::uint64_t comm_cost(std::uint64_t image_h, std::uint64_t image_w, std::uint64_t channels,
                        std::uint64_t batch, std::uint64_t bytes_per_scalar);
CommBreakdown comm_cost_breakdown(std::uint64_t image_h, std::uint64_t image_w,
                                  std::uint64_t channels, std::uint64_t batch,
                                  std::uint64_t bytes_per_scalar);
/// Per-client per-iteration cost of sharing a full gradient.
std::uint64_t gradient_sharing_cost(std::uint64_t parameters, std::uint64_t bytes_per_scalar);

// ---------------------------------------------------------------------------
// Transcript and privacy audit

enum class Direction : std::uint8_t { kToGenerator = 0, kFromGenerator = 1 };

/// Append-only record of every frame crossing the generator boundary.
/// Appends are serialised; readers take a copy.
class Transcript {
 public:
  struct Entry {
    Direction direction = Direction::kToGenerator;
    std::uint16_t endpoint = 0;
    std::vector<std::uint8_t> frame;
  };

  Transcript() = default;
  Transcript(const Transcript& other) : entries_(other.entries()) {}
  Transcript& operator=(const Transcript& other) {
    if (this != &other) {
      auto copy = other.entries();
      std::lock_guard lock(mu_);
      entries_ = std::move(copy);
    }
    return *this;
  }

  void append(Direction d, std::uint16_t endpoint, std::span<const std::uint8_t> frame);
  std::vector<Entry> entries() const;
  std::size_t size() const;
  std::uint64_t total_bytes() const;

  /// Dump format, per entry: u8 direction, u16 endpoint, u32 length, frame bytes.
  void save(const std::string& path) const;
  static Transcript load(const std::string& path);

 private:
  mutable std::mutex mu_;
  std::vector<Entry> entries_;
};

struct PrivacyViolation {
  std::size_t frame_index = 0;
  std::string reason;
};

/// Checks a generator-side transcript against the real dataset:
///   - every frame decodes to one of the eight defined types;
///   - inbound frames are only JOIN, AUX_BATCH, FAKE_GRAD or D_LOSS;
///   - no inbound payload carries a real sample, either as an adjacent
///     (x, y) float pair or as two consecutive real y values.
std::vector<PrivacyViolation> audit_privacy(const Transcript& transcript, const Dataset& real);

}  // namespace adgn
