/*
 * SPDX-License-Identifier: Apache-2.0
 */

#include "pucoord/isa.hpp"
#include "pucoord/error.hpp"

#include <array>
#include <sstream>

namespace pucoord::isa {

namespace {

constexpr unsigned kPrgEndBit = 57;
constexpr unsigned kOpcodeShift = 58;

struct OpInfo {
  Opcode op;
  std::string_view name;
};

constexpr std::array<OpInfo, 18> kOps = {{
    {Opcode::PrgPrm, "PRG_PRM"},
    {Opcode::StridePrm, "STRIDE_PRM"},
    {Opcode::Im2colPrm, "IM2COL_PRM"},
    {Opcode::UramPrm, "URAM_PRM"},
    {Opcode::ResAddStridePrm, "RES_ADD_STRIDE_PRM"},
    {Opcode::ParamPrm, "PARAM_PRM"},
    {Opcode::LinearAdm, "LINEAR_ADM"},
    {Opcode::Im2colAdm, "IM2COL_ADM"},
    {Opcode::StrideAdm, "STRIDE_ADM"},
    {Opcode::WeightsAdm, "WEIGHTS_ADM"},
    {Opcode::ResAddAdm, "RES_ADD_ADM"},
    {Opcode::ResAddStrideAdm, "RES_ADD_STRIDE_ADM"},
    {Opcode::CycleAddr, "CYCLE_ADDR"},
    {Opcode::SendReq, "SEND_REQ"},
    {Opcode::SendAck, "SEND_ACK"},
    {Opcode::WaitReq, "WAIT_REQ"},
    {Opcode::WaitAck, "WAIT_ACK"},
    {Opcode::Gemm, "GEMM"},
}};

bool known_opcode(unsigned value) {
  for (const auto &info : kOps)
    if (static_cast<unsigned>(info.op) == value)
      return true;
  return false;
}

// Sequential payload packer; fields are laid out from bit 0 upwards.
class Packer {
public:
  void put(std::uint64_t value, unsigned bits, const char *field) {
    if (bits < 64 && value >> bits)
      throw Error(ErrorKind::FieldOverflow,
                  std::string(field) + " = " + std::to_string(value) +
                      " exceeds " + std::to_string(bits) + " bits");
    word_ |= value << pos_;
    pos_ += bits;
  }
  void put_signed(std::int64_t value, unsigned bits, const char *field) {
    const std::int64_t lo = -(std::int64_t{1} << (bits - 1));
    const std::int64_t hi = (std::int64_t{1} << (bits - 1)) - 1;
    if (value < lo || value > hi)
      throw Error(ErrorKind::FieldOverflow,
                  std::string(field) + " = " + std::to_string(value) +
                      " exceeds signed " + std::to_string(bits) + " bits");
    put(static_cast<std::uint64_t>(value) & ((std::uint64_t{1} << bits) - 1),
        bits, field);
  }
  std::uint64_t word() const { return word_; }

private:
  std::uint64_t word_ = 0;
  unsigned pos_ = 0;
};

class Unpacker {
public:
  explicit Unpacker(std::uint64_t payload) : payload_(payload) {}
  std::uint64_t get(unsigned bits) {
    const std::uint64_t v = (payload_ >> pos_) & ((std::uint64_t{1} << bits) - 1);
    pos_ += bits;
    return v;
  }
  std::int64_t get_signed(unsigned bits) {
    const std::uint64_t raw = get(bits);
    const std::uint64_t sign = std::uint64_t{1} << (bits - 1);
    return static_cast<std::int64_t>(raw ^ sign) - static_cast<std::int64_t>(sign);
  }

private:
  std::uint64_t payload_;
  unsigned pos_ = 0;
};

Opcode config_opcode(ConfigKind kind) {
  switch (kind) {
  case ConfigKind::StridePattern: return Opcode::StridePrm;
  case ConfigKind::Im2col: return Opcode::Im2colPrm;
  case ConfigKind::UramAddr: return Opcode::UramPrm;
  case ConfigKind::ResAddStride: return Opcode::ResAddStridePrm;
  case ConfigKind::ProgParam: return Opcode::ParamPrm;
  }
  return Opcode::ParamPrm;
}

Opcode move_opcode(MoveKind kind) {
  switch (kind) {
  case MoveKind::Linear: return Opcode::LinearAdm;
  case MoveKind::Im2col: return Opcode::Im2colAdm;
  case MoveKind::Stride: return Opcode::StrideAdm;
  case MoveKind::Weights: return Opcode::WeightsAdm;
  case MoveKind::ResAdd: return Opcode::ResAddAdm;
  case MoveKind::ResAddStride: return Opcode::ResAddStrideAdm;
  }
  return Opcode::LinearAdm;
}

Opcode sync_opcode(SyncKind kind) {
  switch (kind) {
  case SyncKind::SendReq: return Opcode::SendReq;
  case SyncKind::SendAck: return Opcode::SendAck;
  case SyncKind::WaitReq: return Opcode::WaitReq;
  case SyncKind::WaitAck: return Opcode::WaitAck;
  }
  return Opcode::SendReq;
}

// Which Config must immediately precede a DataMove, if any.
std::optional<Opcode> required_predecessor(Opcode op) {
  switch (op) {
  case Opcode::Im2colAdm: return Opcode::Im2colPrm;
  case Opcode::StrideAdm: return Opcode::StridePrm;
  case Opcode::WeightsAdm: return Opcode::UramPrm;
  case Opcode::ResAddStrideAdm: return Opcode::ResAddStridePrm;
  default: return std::nullopt;
  }
}

} // namespace

std::size_t config_arity(ConfigKind kind) {
  return kind == ConfigKind::UramAddr ? 2 : 3;
}

Opcode opcode_of(const Instruction &instr) {
  return std::visit(
      [](const auto &b) -> Opcode {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, ProgCtrl>) return Opcode::PrgPrm;
        else if constexpr (std::is_same_v<T, Config>) return config_opcode(b.kind);
        else if constexpr (std::is_same_v<T, DataMove>) return move_opcode(b.kind);
        else if constexpr (std::is_same_v<T, AddrCyc>) return Opcode::CycleAddr;
        else if constexpr (std::is_same_v<T, Sync>) return sync_opcode(b.kind);
        else return Opcode::Gemm;
      },
      instr.body);
}

std::string_view mnemonic(Opcode op) {
  for (const auto &info : kOps)
    if (info.op == op)
      return info.name;
  return "?";
}

std::optional<Opcode> opcode_from_mnemonic(std::string_view text) {
  for (const auto &info : kOps)
    if (info.name == text)
      return info.op;
  return std::nullopt;
}

bool is_data_move(Opcode op) {
  const auto v = static_cast<unsigned>(op);
  return v >= 0x10 && v <= 0x15;
}

bool is_config(Opcode op) {
  const auto v = static_cast<unsigned>(op);
  return v >= 0x04 && v <= 0x08;
}

std::uint64_t encode(const Instruction &instr) {
  Packer p;
  std::visit(
      [&p](const auto &b) {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, ProgCtrl>) {
          p.put(b.num_rounds, kRoundsBits, "NR");
          p.put(b.icu_base_addr, kIcuAddrBits, "ICU_BA");
        } else if constexpr (std::is_same_v<T, Config>) {
          if (b.params.size() != config_arity(b.kind))
            throw Error(ErrorKind::FieldOverflow,
                        "config arity " + std::to_string(b.params.size()));
          for (auto v : b.params)
            p.put(v, kConfigParamBits, "PARAM");
        } else if constexpr (std::is_same_v<T, DataMove>) {
          p.put(b.cur_base_addr, kAddrBits, "CUR_BA");
          p.put(b.length, kLenBits, "LEN");
        } else if constexpr (std::is_same_v<T, AddrCyc>) {
          if (b.base_addr % (1u << kCycleBaseShift) != 0)
            throw Error(ErrorKind::FieldOverflow, "BA not 64-byte aligned");
          if (b.addr_offset % (1 << kCycleOffsetShift) != 0)
            throw Error(ErrorKind::FieldOverflow, "AOFFS not 4 KiB aligned");
          p.put(b.base_addr >> kCycleBaseShift, kCycleBaseBits, "BA");
          p.put_signed(b.addr_offset / (1 << kCycleOffsetShift), kCycleOffsetBits,
                       "AOFFS");
          p.put(b.num_cycles, kCycleCountBits, "NC");
          p.put(b.iter_counter, kCycleCountBits, "IC");
        } else if constexpr (std::is_same_v<T, Sync>) {
          p.put(b.peer_pid, kPidBits, "PID");
          p.put(b.bid, kBidBits, "BID");
          p.put(b.base_bid, kBidBits, "BASE_BID");
          p.put(b.num_cycles, kSyncCountBits, "NC");
          p.put(b.iter_counter, kSyncCountBits, "IC");
        } else {
          p.put(b.m, kGemmMBits, "M");
          p.put(b.k, kGemmKBits, "K");
          p.put(b.n, kGemmNBits, "N");
          p.put(b.rounds, kGemmRoundsBits, "ROUNDS");
          p.put(b.out_shift, kShiftBits, "OSHIFT");
          p.put(b.res_shift, kShiftBits, "RSHIFT");
          p.put(b.relu_enable ? 1 : 0, 1, "RELU");
          p.put(b.add_enable ? 1 : 0, 1, "ADD");
        }
      },
      instr.body);
  return (static_cast<std::uint64_t>(opcode_of(instr)) << kOpcodeShift) |
         (static_cast<std::uint64_t>(instr.prg_end) << kPrgEndBit) | p.word();
}

Instruction decode(std::uint64_t word) {
  const unsigned raw_op = static_cast<unsigned>(word >> kOpcodeShift);
  if (!known_opcode(raw_op)) {
    std::ostringstream os;
    os << "0x" << std::hex << raw_op;
    throw Error(ErrorKind::UnknownOpcode, os.str());
  }
  const auto op = static_cast<Opcode>(raw_op);
  Instruction out;
  out.prg_end = (word >> kPrgEndBit) & 1;
  Unpacker u(word & ((std::uint64_t{1} << kPrgEndBit) - 1));

  if (op == Opcode::PrgPrm) {
    ProgCtrl b;
    b.num_rounds = static_cast<std::uint32_t>(u.get(kRoundsBits));
    b.icu_base_addr = static_cast<std::uint32_t>(u.get(kIcuAddrBits));
    out.body = b;
  } else if (is_config(op)) {
    Config b;
    switch (op) {
    case Opcode::StridePrm: b.kind = ConfigKind::StridePattern; break;
    case Opcode::Im2colPrm: b.kind = ConfigKind::Im2col; break;
    case Opcode::UramPrm: b.kind = ConfigKind::UramAddr; break;
    case Opcode::ResAddStridePrm: b.kind = ConfigKind::ResAddStride; break;
    default: b.kind = ConfigKind::ProgParam; break;
    }
    for (std::size_t i = 0; i < config_arity(b.kind); ++i)
      b.params.push_back(static_cast<std::uint32_t>(u.get(kConfigParamBits)));
    out.body = b;
  } else if (is_data_move(op)) {
    DataMove b;
    b.kind = static_cast<MoveKind>(raw_op - static_cast<unsigned>(Opcode::LinearAdm));
    b.cur_base_addr = u.get(kAddrBits);
    b.length = static_cast<std::uint32_t>(u.get(kLenBits));
    out.body = b;
  } else if (op == Opcode::CycleAddr) {
    AddrCyc b;
    b.base_addr = u.get(kCycleBaseBits) << kCycleBaseShift;
    b.addr_offset = u.get_signed(kCycleOffsetBits) * (1 << kCycleOffsetShift);
    b.num_cycles = static_cast<std::uint32_t>(u.get(kCycleCountBits));
    b.iter_counter = static_cast<std::uint32_t>(u.get(kCycleCountBits));
    out.body = b;
  } else if (op == Opcode::Gemm) {
    Compute b;
    b.m = static_cast<std::uint32_t>(u.get(kGemmMBits));
    b.k = static_cast<std::uint32_t>(u.get(kGemmKBits));
    b.n = static_cast<std::uint32_t>(u.get(kGemmNBits));
    b.rounds = static_cast<std::uint32_t>(u.get(kGemmRoundsBits));
    b.out_shift = static_cast<std::uint32_t>(u.get(kShiftBits));
    b.res_shift = static_cast<std::uint32_t>(u.get(kShiftBits));
    b.relu_enable = u.get(1) != 0;
    b.add_enable = u.get(1) != 0;
    out.body = b;
  } else {
    Sync b;
    b.kind = static_cast<SyncKind>(raw_op - static_cast<unsigned>(Opcode::SendReq));
    b.peer_pid = static_cast<std::uint32_t>(u.get(kPidBits));
    b.bid = static_cast<std::uint32_t>(u.get(kBidBits));
    b.base_bid = static_cast<std::uint32_t>(u.get(kBidBits));
    b.num_cycles = static_cast<std::uint32_t>(u.get(kSyncCountBits));
    b.iter_counter = static_cast<std::uint32_t>(u.get(kSyncCountBits));
    out.body = b;
  }
  return out;
}

AddrCycState addr_cyc_update(AddrCycState state, const AddrCyc &instr) {
  if (state.iter_counter == 0)
    return {instr.num_cycles, instr.base_addr};
  return {state.iter_counter - 1,
          static_cast<std::uint64_t>(static_cast<std::int64_t>(state.cur_base_addr) +
                                     instr.addr_offset)};
}

SyncState sync_update(SyncState state, const Sync &instr) {
  if (instr.num_cycles == 0)
    return state; // bypass
  if (state.iter_counter == 0)
    return {instr.base_bid, instr.num_cycles};
  return {state.bid + 1, state.iter_counter - 1};
}

const char *to_string(Group group) {
  switch (group) {
  case Group::LD: return "LD";
  case Group::CP: return "CP";
  case Group::ST: return "ST";
  }
  return "?";
}

std::optional<Group> group_from_string(std::string_view text) {
  if (text == "LD" || text == "ld") return Group::LD;
  if (text == "CP" || text == "cp") return Group::CP;
  if (text == "ST" || text == "st") return Group::ST;
  return std::nullopt;
}

bool allowed_in_group(Opcode op, Group group) {
  switch (op) {
  case Opcode::PrgPrm:
  case Opcode::ParamPrm:
  case Opcode::CycleAddr:
    return true;
  case Opcode::LinearAdm:
  case Opcode::StridePrm:
  case Opcode::StrideAdm:
    return group == Group::LD || group == Group::ST;
  case Opcode::Im2colPrm:
  case Opcode::Im2colAdm:
  case Opcode::SendAck:
  case Opcode::WaitReq:
    return group == Group::LD;
  case Opcode::SendReq:
  case Opcode::WaitAck:
    return group == Group::ST;
  case Opcode::UramPrm:
  case Opcode::WeightsAdm:
  case Opcode::ResAddStridePrm:
  case Opcode::ResAddStrideAdm:
  case Opcode::ResAddAdm:
  case Opcode::Gemm:
    return group == Group::CP;
  }
  return false;
}

void validate(const Program &program) {
  const auto &ins = program.instructions;
  if (ins.empty())
    throw Error(ErrorKind::InvalidProgram, "empty program");
  if (!ins.front().is<ProgCtrl>())
    throw Error(ErrorKind::InvalidProgram, "instruction 0 must be PRG_PRM");

  std::size_t ends = 0;
  for (std::size_t i = 0; i < ins.size(); ++i) {
    const Opcode op = opcode_of(ins[i]);
    const std::string where = " at " + std::to_string(i);
    if (!allowed_in_group(op, program.group))
      throw Error(ErrorKind::GroupViolation, std::string(mnemonic(op)) + where +
                                                 " not allowed in " +
                                                 to_string(program.group));
    if (auto pred = required_predecessor(op)) {
      if (i == 0 || opcode_of(ins[i - 1]) != *pred)
        throw Error(ErrorKind::MissingConfigPredecessor,
                    std::string(mnemonic(op)) + where + " requires preceding " +
                        std::string(mnemonic(*pred)));
    }
    if (op == Opcode::CycleAddr && (i == 0 || !is_data_move(opcode_of(ins[i - 1]))))
      throw Error(ErrorKind::InvalidProgram, "CYCLE_ADDR" + where + " must follow a *_ADM");
    if (op == Opcode::PrgPrm && i != 0)
      throw Error(ErrorKind::InvalidProgram, "second PRG_PRM" + where);
    if (const auto *c = std::get_if<AddrCyc>(&ins[i].body);
        c && c->iter_counter > c->num_cycles)
      throw Error(ErrorKind::InvalidProgram, "IC > NC" + where);
    if (const auto *s = std::get_if<Sync>(&ins[i].body);
        s && s->iter_counter > s->num_cycles)
      throw Error(ErrorKind::InvalidProgram, "IC > NC" + where);
    if (const auto *c = std::get_if<Config>(&ins[i].body);
        c && c->params.size() != config_arity(c->kind))
      throw Error(ErrorKind::InvalidProgram, "config arity" + where);
    if (ins[i].prg_end)
      ++ends;
  }
  if (ends != 1 || !ins.back().prg_end)
    throw Error(ErrorKind::InvalidProgram,
                "exactly one PRG_END, on the last instruction, is required");
  if (ins.front().as<ProgCtrl>().icu_base_addr >= ins.size())
    throw Error(ErrorKind::InvalidProgram, "ICU_BA beyond program end");
}

Image to_image(const Program &program, std::uint16_t pu_id) {
  Image img;
  img.pu_id = pu_id;
  img.group = program.group;
  img.words.reserve(program.instructions.size());
  for (const auto &i : program.instructions)
    img.words.push_back(encode(i));
  return img;
}

Program from_image(const Image &image) {
  Program p;
  p.group = image.group;
  for (auto w : image.words)
    p.instructions.push_back(decode(w));
  return p;
}

std::vector<std::uint8_t> serialize(const Image &image) {
  std::vector<std::uint8_t> out;
  out.reserve(16 + 8 * image.words.size());
  out.insert(out.end(), kImageMagic.begin(), kImageMagic.end());
  auto put_le = [&out](std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i)
      out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  put_le(image.pu_id, 2);
  put_le(static_cast<std::uint16_t>(image.group), 2);
  put_le(image.words.size(), 4);
  for (auto w : image.words)
    put_le(w, 8);
  return out;
}

Image parse_image(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16 ||
      std::string_view(reinterpret_cast<const char *>(bytes.data()), 8) != kImageMagic)
    throw Error(ErrorKind::BadImage, "missing PUCOORD1 header");
  auto get_le = [&bytes](std::size_t off, int n) {
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i)
      v |= static_cast<std::uint64_t>(bytes[off + i]) << (8 * i);
    return v;
  };
  Image img;
  img.pu_id = static_cast<std::uint16_t>(get_le(8, 2));
  const auto group = get_le(10, 2);
  if (group > 2)
    throw Error(ErrorKind::BadImage, "group " + std::to_string(group));
  img.group = static_cast<Group>(group);
  const auto count = get_le(12, 4);
  if (bytes.size() != 16 + 8 * count)
    throw Error(ErrorKind::BadImage, "word count does not match image size");
  for (std::size_t i = 0; i < count; ++i)
    img.words.push_back(get_le(16 + 8 * i, 8));
  return img;
}

} // namespace pucoord::isa
