/*
 * SPDX-License-Identifier: Apache-2.0
 */

// Text assembly: one instruction per line, `MNEMONIC KEY=value ... [END]`.
// `#` and `;` start comments. Disassembly emits every key in a fixed order,
// which is the canonical form.

#include "pucoord/error.hpp"
#include "pucoord/isa.hpp"

#include <charconv>
#include <map>
#include <sstream>

namespace pucoord::isa {

namespace {

std::vector<std::string_view> config_keys(ConfigKind kind) {
  switch (kind) {
  case ConfigKind::StridePattern:
  case ConfigKind::ResAddStride: return {"ROW", "STRIDE", "ROWS"};
  case ConfigKind::Im2col: return {"KERNEL", "STRIDE", "CH"};
  case ConfigKind::UramAddr: return {"ADDR", "LEAD"};
  case ConfigKind::ProgParam: return {"P0", "P1", "P2"};
  }
  return {};
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
    s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
    s.remove_suffix(1);
  return s;
}

[[noreturn]] void syntax(std::size_t line, const std::string &msg) {
  throw Error(ErrorKind::SyntaxError, "line " + std::to_string(line) + ": " + msg);
}

std::int64_t parse_int(std::string_view text, std::size_t line) {
  bool neg = false;
  if (!text.empty() && text.front() == '-') {
    neg = true;
    text.remove_prefix(1);
  }
  int base = 10;
  if (text.size() > 2 && text[0] == '0' && (text[1] == 'x' || text[1] == 'X')) {
    base = 16;
    text.remove_prefix(2);
  }
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v, base);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty())
    syntax(line, "bad number '" + std::string(text) + "'");
  return neg ? -static_cast<std::int64_t>(v) : static_cast<std::int64_t>(v);
}

class Fields {
public:
  Fields(std::map<std::string, std::int64_t> values, std::size_t line)
      : values_(std::move(values)), line_(line) {}

  std::int64_t get(std::string_view key, std::int64_t fallback = 0) {
    auto it = values_.find(std::string(key));
    if (it == values_.end())
      return fallback;
    std::int64_t v = it->second;
    values_.erase(it);
    return v;
  }
  std::uint32_t u32(std::string_view key, std::int64_t fallback = 0) {
    auto v = get(key, fallback);
    if (v < 0 || v > 0xffffffffLL)
      syntax(line_, std::string(key) + " out of range");
    return static_cast<std::uint32_t>(v);
  }
  bool has(std::string_view key) const { return values_.count(std::string(key)) != 0; }
  void finish() const {
    if (!values_.empty())
      syntax(line_, "unknown key '" + values_.begin()->first + "'");
  }

private:
  std::map<std::string, std::int64_t> values_;
  std::size_t line_;
};

Instruction build(Opcode op, Fields &f, std::size_t line) {
  Instruction ins;
  if (op == Opcode::PrgPrm) {
    ins.body = ProgCtrl{f.u32("NR"), f.u32("BA")};
  } else if (is_config(op)) {
    Config c;
    switch (op) {
    case Opcode::StridePrm: c.kind = ConfigKind::StridePattern; break;
    case Opcode::Im2colPrm: c.kind = ConfigKind::Im2col; break;
    case Opcode::UramPrm: c.kind = ConfigKind::UramAddr; break;
    case Opcode::ResAddStridePrm: c.kind = ConfigKind::ResAddStride; break;
    default: c.kind = ConfigKind::ProgParam; break;
    }
    for (auto key : config_keys(c.kind))
      c.params.push_back(f.u32(key));
    ins.body = c;
  } else if (is_data_move(op)) {
    DataMove d;
    d.kind = static_cast<MoveKind>(static_cast<unsigned>(op) -
                                   static_cast<unsigned>(Opcode::LinearAdm));
    auto ba = f.get("BA");
    if (ba < 0)
      syntax(line, "BA negative");
    d.cur_base_addr = static_cast<std::uint64_t>(ba);
    d.length = f.u32("LEN");
    ins.body = d;
  } else if (op == Opcode::CycleAddr) {
    AddrCyc c;
    auto ba = f.get("BA");
    if (ba < 0)
      syntax(line, "BA negative");
    c.base_addr = static_cast<std::uint64_t>(ba);
    c.addr_offset = f.get("AOFFS");
    c.num_cycles = f.u32("NC");
    c.iter_counter = f.u32("IC", c.num_cycles);
    ins.body = c;
  } else if (op == Opcode::Gemm) {
    Compute c;
    c.m = f.u32("M");
    c.k = f.u32("K");
    c.n = f.u32("N");
    c.rounds = f.u32("ROUNDS", 1);
    c.out_shift = f.u32("OSHIFT");
    c.res_shift = f.u32("RSHIFT");
    c.relu_enable = f.u32("RELU") != 0;
    c.add_enable = f.u32("ADD") != 0;
    ins.body = c;
  } else {
    Sync s;
    s.kind = static_cast<SyncKind>(static_cast<unsigned>(op) -
                                   static_cast<unsigned>(Opcode::SendReq));
    const bool send = s.kind == SyncKind::SendReq || s.kind == SyncKind::SendAck;
    s.peer_pid = f.u32(send ? "DST" : "SRC");
    s.bid = f.u32("BID");
    s.base_bid = f.u32("BASE", s.bid);
    s.num_cycles = f.u32("NC");
    s.iter_counter = f.u32("IC", s.num_cycles);
    ins.body = s;
  }
  return ins;
}

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << "0x" << std::hex << v;
  return os.str();
}

} // namespace

Program assemble(std::string_view source, Group group) {
  Program program;
  program.group = group;
  std::size_t line_no = 0;
  std::vector<std::size_t> lines;
  while (!source.empty()) {
    ++line_no;
    auto nl = source.find('\n');
    std::string_view line = source.substr(0, nl);
    source = nl == std::string_view::npos ? std::string_view{} : source.substr(nl + 1);
    if (auto c = line.find_first_of("#;"); c != std::string_view::npos)
      line = line.substr(0, c);
    line = trim(line);
    if (line.empty())
      continue;

    std::istringstream tokens{std::string(line)};
    std::string word;
    tokens >> word;
    auto op = opcode_from_mnemonic(word);
    if (!op)
      syntax(line_no, "unknown mnemonic '" + word + "'");
    std::map<std::string, std::int64_t> values;
    bool end = false;
    while (tokens >> word) {
      if (word == "END") {
        end = true;
        continue;
      }
      auto eq = word.find('=');
      if (eq == std::string::npos || eq == 0)
        syntax(line_no, "expected KEY=value, got '" + word + "'");
      auto key = word.substr(0, eq);
      if (values.count(key))
        syntax(line_no, "duplicate key " + key);
      values[key] = parse_int(std::string_view(word).substr(eq + 1), line_no);
    }
    Fields fields(std::move(values), line_no);
    Instruction ins = build(*op, fields, line_no);
    fields.finish();
    ins.prg_end = end;

    if (!allowed_in_group(*op, group))
      throw Error(ErrorKind::GroupViolation, "line " + std::to_string(line_no) + ": " +
                                                 std::string(mnemonic(*op)) +
                                                 " not allowed in " + to_string(group));
    program.instructions.push_back(std::move(ins));
    lines.push_back(line_no);
  }
  if (program.instructions.empty())
    throw Error(ErrorKind::SyntaxError, "empty program");
  for (const auto &ins : program.instructions)
    encode(ins); // field-width check
  validate(program);
  return program;
}

std::string disassemble(const Instruction &instr) {
  std::ostringstream os;
  const Opcode op = opcode_of(instr);
  os << mnemonic(op);
  std::visit(
      [&os](const auto &b) {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, ProgCtrl>) {
          os << " NR=" << b.num_rounds << " BA=" << b.icu_base_addr;
        } else if constexpr (std::is_same_v<T, Config>) {
          auto keys = config_keys(b.kind);
          for (std::size_t i = 0; i < b.params.size() && i < keys.size(); ++i)
            os << ' ' << keys[i] << '=' << b.params[i];
        } else if constexpr (std::is_same_v<T, DataMove>) {
          os << " BA=" << hex(b.cur_base_addr) << " LEN=" << b.length;
        } else if constexpr (std::is_same_v<T, AddrCyc>) {
          os << " BA=" << hex(b.base_addr) << " AOFFS=";
          if (b.addr_offset < 0)
            os << '-' << hex(static_cast<std::uint64_t>(-b.addr_offset));
          else
            os << hex(static_cast<std::uint64_t>(b.addr_offset));
          os << " NC=" << b.num_cycles << " IC=" << b.iter_counter;
        } else if constexpr (std::is_same_v<T, Sync>) {
          const bool send = b.kind == SyncKind::SendReq || b.kind == SyncKind::SendAck;
          os << (send ? " DST=" : " SRC=") << b.peer_pid << " BID=" << b.bid
             << " BASE=" << b.base_bid << " NC=" << b.num_cycles
             << " IC=" << b.iter_counter;
        } else {
          os << " M=" << b.m << " K=" << b.k << " N=" << b.n << " ROUNDS=" << b.rounds
             << " OSHIFT=" << b.out_shift << " RSHIFT=" << b.res_shift
             << " RELU=" << (b.relu_enable ? 1 : 0) << " ADD=" << (b.add_enable ? 1 : 0);
        }
      },
      instr.body);
  if (instr.prg_end)
    os << " END";
  return os.str();
}

std::string disassemble(const Program &program) {
  std::string out;
  for (const auto &ins : program.instructions) {
    out += disassemble(ins);
    out += '\n';
  }
  return out;
}

} // namespace pucoord::isa
