/*
 * SPDX-License-Identifier: Apache-2.0
 */

// Instruction set of the per-PU instruction controller: six instruction
// types, their 64-bit wire format, the write-back state updates of the two
// dynamic types, and per-group program validation.
//
// Wire format (normative, see docs/isa.md):
//   [63:58] opcode   [57] PRG_END   [56:0] payload (per type)

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace pucoord::isa {

// Field widths. All are part of the wire format.
inline constexpr unsigned kOpcodeBits = 6;
inline constexpr unsigned kPidBits = 4;
inline constexpr unsigned kBidBits = 8;
inline constexpr unsigned kSyncCountBits = 16;
inline constexpr unsigned kAddrBits = 33;
inline constexpr unsigned kLenBits = 24;
inline constexpr unsigned kRoundsBits = 16;
inline constexpr unsigned kIcuAddrBits = 16;
inline constexpr unsigned kConfigParamBits = 19;
// AddrCyc packs a 64-byte-granular base, a 4 KiB-granular signed offset and
// 8-bit counters into the 57-bit payload.
inline constexpr unsigned kCycleBaseBits = 27;
inline constexpr unsigned kCycleBaseShift = 6;
inline constexpr unsigned kCycleOffsetBits = 14;
inline constexpr unsigned kCycleOffsetShift = 12;
inline constexpr unsigned kCycleCountBits = 8;
inline constexpr unsigned kGemmMBits = 7;
inline constexpr unsigned kGemmKBits = 14;
inline constexpr unsigned kGemmNBits = 16;
inline constexpr unsigned kGemmRoundsBits = 8;
inline constexpr unsigned kShiftBits = 5;

enum class Opcode : std::uint8_t {
  PrgPrm = 0x01,
  StridePrm = 0x04,
  Im2colPrm = 0x05,
  UramPrm = 0x06,
  ResAddStridePrm = 0x07,
  ParamPrm = 0x08,
  LinearAdm = 0x10,
  Im2colAdm = 0x11,
  StrideAdm = 0x12,
  WeightsAdm = 0x13,
  ResAddAdm = 0x14,
  ResAddStrideAdm = 0x15,
  CycleAddr = 0x18,
  SendReq = 0x20,
  SendAck = 0x21,
  WaitReq = 0x22,
  WaitAck = 0x23,
  Gemm = 0x28,
};

enum class Group : std::uint8_t { LD = 0, CP = 1, ST = 2 };

enum class ConfigKind : std::uint8_t {
  StridePattern,
  Im2col,
  UramAddr,
  ResAddStride,
  ProgParam,
};

enum class MoveKind : std::uint8_t {
  Linear,
  Im2col,
  Stride,
  Weights,
  ResAdd,
  ResAddStride,
};

enum class SyncKind : std::uint8_t { SendReq, SendAck, WaitReq, WaitAck };

struct ProgCtrl {
  std::uint32_t num_rounds = 0; // 0 = run until reset
  std::uint32_t icu_base_addr = 0;
  bool operator==(const ProgCtrl &) const = default;
};

struct Config {
  ConfigKind kind = ConfigKind::ProgParam;
  std::vector<std::uint32_t> params; // length == config_arity(kind)
  bool operator==(const Config &) const = default;
};

struct DataMove {
  MoveKind kind = MoveKind::Linear;
  std::uint64_t cur_base_addr = 0;
  std::uint32_t length = 0;
  bool operator==(const DataMove &) const = default;
};

struct AddrCyc {
  std::uint64_t base_addr = 0;   // bytes, multiple of 64
  std::int64_t addr_offset = 0;  // bytes, multiple of 4096
  std::uint32_t num_cycles = 0;
  std::uint32_t iter_counter = 0;
  bool operator==(const AddrCyc &) const = default;
};

struct Sync {
  SyncKind kind = SyncKind::SendReq;
  std::uint32_t peer_pid = 0; // DST_PID for SEND, SRC_PID for WAIT
  std::uint32_t bid = 0;
  std::uint32_t base_bid = 0;
  std::uint32_t num_cycles = 0;
  std::uint32_t iter_counter = 0;
  bool operator==(const Sync &) const = default;
};

struct Compute {
  bool relu_enable = false;
  bool add_enable = false;
  std::uint32_t rounds = 1;
  std::uint32_t out_shift = 0;
  std::uint32_t res_shift = 0;
  std::uint32_t m = 0;
  std::uint32_t k = 0;
  std::uint32_t n = 0;
  bool operator==(const Compute &) const = default;
};

using Body = std::variant<ProgCtrl, Config, DataMove, AddrCyc, Sync, Compute>;

struct Instruction {
  Body body;
  bool prg_end = false;
  bool operator==(const Instruction &) const = default;

  template <typename T> bool is() const {
    return std::holds_alternative<T>(body);
  }
  template <typename T> T &as() { return std::get<T>(body); }
  template <typename T> const T &as() const { return std::get<T>(body); }
};

std::size_t config_arity(ConfigKind kind);

Opcode opcode_of(const Instruction &instr);
std::string_view mnemonic(Opcode op);
std::optional<Opcode> opcode_from_mnemonic(std::string_view text);
bool is_data_move(Opcode op);
bool is_config(Opcode op);

/// Packs an instruction into its 64-bit word. Throws FieldOverflow when a
/// field does not fit its slot (or violates the AddrCyc alignment).
std::uint64_t encode(const Instruction &instr);

/// Inverse of encode(). Opcode 0 and every unassigned opcode raise
/// UnknownOpcode, so an all-zero word never decodes.
Instruction decode(std::uint64_t word);

struct AddrCycState {
  std::uint32_t iter_counter = 0;
  std::uint64_t cur_base_addr = 0;
  bool operator==(const AddrCycState &) const = default;
};

struct SyncState {
  std::uint32_t bid = 0;
  std::uint32_t iter_counter = 0;
  bool operator==(const SyncState &) const = default;
};

AddrCycState addr_cyc_update(AddrCycState state, const AddrCyc &instr);
SyncState sync_update(SyncState state, const Sync &instr);

const char *to_string(Group group);
std::optional<Group> group_from_string(std::string_view text);

struct Program {
  Group group = Group::LD;
  std::vector<Instruction> instructions;
  bool operator==(const Program &) const = default;

  /// Loop start (ICU_BA of the leading PRG_PRM).
  std::uint32_t base_addr() const { return instructions.front().as<ProgCtrl>().icu_base_addr; }
};

/// Whether an opcode may appear in a program of the given group.
bool allowed_in_group(Opcode op, Group group);

/// Checks every program invariant; throws GroupViolation,
/// MissingConfigPredecessor or InvalidProgram.
void validate(const Program &program);

Program assemble(std::string_view source, Group group);
std::string disassemble(const Program &program);
std::string disassemble(const Instruction &instr);

/// Binary container for one (PU, group) instruction image.
struct Image {
  std::uint16_t pu_id = 0;
  Group group = Group::LD;
  std::vector<std::uint64_t> words;
  bool operator==(const Image &) const = default;
};

inline constexpr std::string_view kImageMagic = "PUCOORD1";

std::vector<std::uint8_t> serialize(const Image &image);
Image parse_image(std::span<const std::uint8_t> bytes);

Image to_image(const Program &program, std::uint16_t pu_id);
Program from_image(const Image &image);

} // namespace pucoord::isa
