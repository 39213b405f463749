#include "adgn/protocol.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <unordered_set>

#include "adgn/bytes.hpp"
#include "adgn/error.hpp"

namespace adgn {

namespace {

constexpr std::uint8_t kMagic[4] = {'A', 'D', 'G', 'N'};
constexpr std::uint8_t kDtypeF32 = 0;

void check_payload_kind(const Message& m) {
  auto bad = [&](const char* want) {
    throw ContractViolation(std::string(msg_type_name(m.type)) + " message must carry " + want);
  };
  switch (m.type) {
    case MsgType::kJoin:
      if (!std::holds_alternative<JoinBody>(m.payload)) bad("a join body");
      break;
    case MsgType::kRoundBegin:
      if (!std::holds_alternative<RoundBeginBody>(m.payload)) bad("a phase");
      break;
    case MsgType::kJoinAck:
    case MsgType::kShutdown:
      if (!std::holds_alternative<std::monostate>(m.payload)) bad("no payload");
      break;
    default: {
      const Tensor* t = std::get_if<Tensor>(&m.payload);
      if (!t) bad("a tensor");
      if (t->shape.empty() || t->shape.size() > 255) bad("a tensor of rank 1..255");
      if (numel(t->shape) != t->data.size()) bad("a tensor whose data matches its shape");
      if (m.type == MsgType::kDLoss && (t->size() != 1 || !std::isfinite(t->data[0]))) {
        bad("a single finite value");
      }
    }
  }
}

}  // namespace

const char* msg_type_name(MsgType t) {
  switch (t) {
    case MsgType::kJoin: return "JOIN";
    case MsgType::kJoinAck: return "JOIN_ACK";
    case MsgType::kAuxBatch: return "AUX_BATCH";
    case MsgType::kFakeBatch: return "FAKE_BATCH";
    case MsgType::kFakeGrad: return "FAKE_GRAD";
    case MsgType::kDLoss: return "D_LOSS";
    case MsgType::kRoundBegin: return "ROUND_BEGIN";
    case MsgType::kShutdown: return "SHUTDOWN";
  }
  return "UNKNOWN";
}

Message make_join(std::uint32_t shard_size, std::uint16_t requested_id) {
  return {MsgType::kJoin, requested_id, 0, JoinBody{shard_size}};
}

Message make_join_ack(std::uint16_t node_id) { return {MsgType::kJoinAck, node_id, 0, {}}; }

Message make_round_begin(std::uint16_t node_id, std::uint32_t round, Phase phase) {
  return {MsgType::kRoundBegin, node_id, round, RoundBeginBody{phase}};
}

Message make_tensor_message(MsgType type, std::uint16_t node_id, std::uint32_t round, Tensor t) {
  return {type, node_id, round, std::move(t)};
}

Message make_shutdown(std::uint16_t node_id, std::uint32_t round) {
  return {MsgType::kShutdown, node_id, round, {}};
}

std::vector<std::uint8_t> encode(const Message& msg) {
  check_payload_kind(msg);
  ByteWriter w;
  w.bytes(kMagic);
  w.u8(kProtocolVersion);
  w.u8(static_cast<std::uint8_t>(msg.type));
  w.u16(msg.node_id);
  w.u32(msg.round);
  const std::size_t len_pos = w.size();
  w.u32(0);
  if (const auto* j = std::get_if<JoinBody>(&msg.payload)) {
    w.u32(j->shard_size);
  } else if (const auto* r = std::get_if<RoundBeginBody>(&msg.payload)) {
    w.u8(static_cast<std::uint8_t>(r->phase));
  } else if (const auto* t = std::get_if<Tensor>(&msg.payload)) {
    w.u8(kDtypeF32);
    w.u8(static_cast<std::uint8_t>(t->shape.size()));
    for (auto d : t->shape) w.u32(static_cast<std::uint32_t>(d));
    for (float v : t->data) w.f32(v);
  }
  w.patch_u32(len_pos, static_cast<std::uint32_t>(w.size() - kFrameHeaderSize));
  return w.take();
}

FrameHeader decode_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kFrameHeaderSize) {
    throw DecodeError(DecodeErrorCode::kTruncated, "frame shorter than its header");
  }
  if (!std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) {
    throw DecodeError(DecodeErrorCode::kBadMagic, "bad frame magic");
  }
  ByteReader r(bytes.subspan(4, kFrameHeaderSize - 4));
  FrameHeader h;
  r.u8(h.version);
  r.u8(h.msg_type);
  r.u16(h.node_id);
  r.u32(h.round);
  r.u32(h.payload_len);
  if (h.version != kProtocolVersion) {
    throw DecodeError(DecodeErrorCode::kUnknownVersion,
                      "unknown protocol version " + std::to_string(h.version));
  }
  return h;
}

Message decode(std::span<const std::uint8_t> bytes) {
  const FrameHeader h = decode_header(bytes);
  if (h.msg_type > static_cast<std::uint8_t>(MsgType::kShutdown)) {
    throw DecodeError(DecodeErrorCode::kUnknownType,
                      "unknown message type " + std::to_string(h.msg_type));
  }
  if (bytes.size() - kFrameHeaderSize < h.payload_len) {
    throw DecodeError(DecodeErrorCode::kTruncated, "payload shorter than payload_len");
  }
  if (bytes.size() - kFrameHeaderSize > h.payload_len) {
    throw DecodeError(DecodeErrorCode::kMalformedPayload, "bytes after the end of the frame");
  }

  Message m;
  m.type = static_cast<MsgType>(h.msg_type);
  m.node_id = h.node_id;
  m.round = h.round;
  ByteReader r(bytes.subspan(kFrameHeaderSize, h.payload_len));
  auto malformed = [&](const std::string& why) {
    return DecodeError(DecodeErrorCode::kMalformedPayload,
                       std::string(msg_type_name(m.type)) + ": " + why);
  };

  switch (m.type) {
    case MsgType::kJoin: {
      JoinBody j;
      if (!r.u32(j.shard_size)) throw malformed("missing shard size");
      m.payload = j;
      break;
    }
    case MsgType::kRoundBegin: {
      std::uint8_t phase = 0;
      if (!r.u8(phase) || phase > 1) throw malformed("bad phase");
      m.payload = RoundBeginBody{static_cast<Phase>(phase)};
      break;
    }
    case MsgType::kJoinAck:
    case MsgType::kShutdown:
      break;
    default: {
      std::uint8_t dtype = 0, ndim = 0;
      if (!r.u8(dtype) || !r.u8(ndim)) throw malformed("truncated tensor header");
      if (dtype != kDtypeF32) throw malformed("unsupported dtype " + std::to_string(dtype));
      if (ndim == 0) throw malformed("rank-0 tensor");
      Shape shape(ndim);
      std::uint64_t count = 1;
      for (auto& d : shape) {
        std::uint32_t v = 0;
        if (!r.u32(v)) throw malformed("truncated dims");
        if (v == 0) throw malformed("zero extent");
        d = v;
        count *= v;
        if (count > r.remaining()) throw malformed("data shorter than dims");
      }
      if (count * 4 != r.remaining()) throw malformed("data length does not match dims");
      std::vector<float> data(count);
      for (auto& v : data) r.f32(v);
      if (m.type == MsgType::kDLoss && (count != 1 || !std::isfinite(data[0]))) {
        throw malformed("loss must be a single finite value");
      }
      m.payload = Tensor(std::move(shape), std::move(data));
      break;
    }
  }
  if (r.remaining() != 0) throw malformed("trailing payload bytes");
  return m;
}

std::uint64_t comm_cost(std::uint64_t h, std::uint64_t w, std::uint64_t c, std::uint64_t batch,
                        std::uint64_t bytes) {
  if (!h || !w || !c || !batch || !bytes) throw ContractViolation("comm_cost: arguments must be >= 1");
  return h * w * c * batch * bytes;
}

CommBreakdown comm_cost_breakdown(std::uint64_t h, std::uint64_t w, std::uint64_t c,
                                  std::uint64_t batch, std::uint64_t bytes) {
  CommBreakdown b;
  b.fake_batch = comm_cost(h, w, c, batch, bytes);
  b.aux_batch = h * w * batch * bytes;
  b.loss = bytes;
  return b;
}

std::uint64_t gradient_sharing_cost(std::uint64_t parameters, std::uint64_t bytes) {
  return parameters * bytes;
}

void Transcript::append(Direction d, std::uint16_t endpoint, std::span<const std::uint8_t> frame) {
  std::lock_guard lock(mu_);
  entries_.push_back({d, endpoint, {frame.begin(), frame.end()}});
}

std::vector<Transcript::Entry> Transcript::entries() const {
  std::lock_guard lock(mu_);
  return entries_;
}

std::size_t Transcript::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

std::uint64_t Transcript::total_bytes() const {
  std::lock_guard lock(mu_);
  std::uint64_t total = 0;
  for (const auto& e : entries_) total += e.frame.size();
  return total;
}

void Transcript::save(const std::string& path) const {
  ByteWriter w;
  for (const auto& e : entries()) {
    w.u8(static_cast<std::uint8_t>(e.direction));
    w.u16(e.endpoint);
    w.u32(static_cast<std::uint32_t>(e.frame.size()));
    w.bytes(e.frame);
  }
  write_file_bytes(path, w.take());
}

Transcript Transcript::load(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  ByteReader r(bytes);
  Transcript t;
  while (r.remaining() > 0) {
    std::uint8_t dir = 0;
    std::uint16_t endpoint = 0;
    std::uint32_t len = 0;
    if (!r.u8(dir) || !r.u16(endpoint) || !r.u32(len) || len > r.remaining() || dir > 1) {
      throw std::runtime_error("transcript " + path + " is truncated or corrupt");
    }
    std::span<const std::uint8_t> frame(bytes.data() + r.position(), len);
    t.entries_.push_back({static_cast<Direction>(dir), endpoint, {frame.begin(), frame.end()}});
    std::string skip;
    r.str(len, skip);
  }
  return t;
}

std::vector<PrivacyViolation> audit_privacy(const Transcript& transcript, const Dataset& real) {
  std::unordered_set<std::uint32_t> real_y;
  std::unordered_set<std::uint64_t> real_pairs;
  for (const auto& s : real) {
    const auto yb = std::bit_cast<std::uint32_t>(s.y);
    const auto xb = std::bit_cast<std::uint32_t>(static_cast<float>(s.x));
    real_y.insert(yb);
    real_pairs.insert((static_cast<std::uint64_t>(xb) << 32) | yb);
  }

  std::vector<PrivacyViolation> out;
  const auto entries = transcript.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    Message m;
    try {
      m = decode(e.frame);
    } catch (const DecodeError& err) {
      out.push_back({i, std::string("undecodable frame: ") + err.what()});
      continue;
    }
    if (e.direction != Direction::kToGenerator) continue;
    if (m.type != MsgType::kJoin && m.type != MsgType::kAuxBatch &&
        m.type != MsgType::kFakeGrad && m.type != MsgType::kDLoss) {
      out.push_back({i, std::string("inbound ") + msg_type_name(m.type) +
                            " frame is not allowed to reach the generator"});
      continue;
    }
    const auto* t = std::get_if<Tensor>(&m.payload);
    if (!t || t->size() < 2) continue;
    for (std::size_t k = 0; k + 1 < t->size(); ++k) {
      const auto a = std::bit_cast<std::uint32_t>(t->data[k]);
      const auto b = std::bit_cast<std::uint32_t>(t->data[k + 1]);
      if (real_pairs.count((static_cast<std::uint64_t>(a) << 32) | b)) {
        out.push_back({i, "payload contains a real (x, y) sample record at offset " +
                              std::to_string(k)});
        break;
      }
      if (real_y.count(a) && real_y.count(b)) {
        out.push_back({i, "payload contains consecutive real y values at offset " +
                              std::to_string(k)});
        break;
      }
    }
  }
  return out;
}

}  // namespace adgn
