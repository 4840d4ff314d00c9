// Copyright 2026 The fpgavirt Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS-IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "fvirt/isa.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <map>
#include <sstream>

#include "fvirt/error.hpp"

namespace fvirt {
namespace {

constexpr std::array<std::string_view, 7> kOpcodeNames = {
    "LOAD", "SAVE", "CONVINIT", "CONV", "POOLINIT", "POOL", "SYSTEM"};
constexpr std::array<std::string_view, kModuleCount> kModuleNames = {
    "LOAD", "SAVE", "CONV", "MISC", "SYS"};

// Field keys per opcode, in encoding order.
const std::vector<std::string_view>& schema_keys(Opcode op) {
  static const std::vector<std::string_view> transfer = {
      "bank_id", "bank_addr", "ddr_addr", "length_bytes"};
  static const std::vector<std::string_view> convinit = {
      "kernel_w", "kernel_h", "stride", "padding",
      "channel_in", "channel_out", "depthwise"};
  static const std::vector<std::string_view> poolinit = {
      "kernel_w", "kernel_h", "stride", "padding", "channel_in", "channel_out"};
  static const std::vector<std::string_view> compute = {
      "in_bank_ids", "out_bank_id", "width_out", "lines_produced"};
  static const std::vector<std::string_view> system = {"sync_bit", "layer_index",
                                                       "finish_bit"};
  switch (op) {
    case Opcode::Load:
    case Opcode::Save:
      return transfer;
    case Opcode::Convinit:
      return convinit;
    case Opcode::Poolinit:
      return poolinit;
    case Opcode::Conv:
    case Opcode::Pool:
      return compute;
    case Opcode::System:
      return system;
  }
  return system;
}

std::size_t expected_alternative(Opcode op) {
  switch (op) {
    case Opcode::Load:
    case Opcode::Save:
      return 0;
    case Opcode::Convinit:
    case Opcode::Poolinit:
      return 1;
    case Opcode::Conv:
    case Opcode::Pool:
      return 2;
    case Opcode::System:
      return 3;
  }
  return 3;
}

std::string schema_problem(const Instruction& in) {
  if (!has_valid_schema(in)) return "fields do not match opcode";
  switch (in.opcode) {
    case Opcode::Load:
    case Opcode::Save: {
      const auto& f = in.transfer();
      if (f.bank_id < 0 || f.bank_addr < 0 || f.ddr_addr < 0 ||
          f.length_bytes < 0) {
        return "transfer fields must be non-negative";
      }
      return {};
    }
    case Opcode::Convinit:
    case Opcode::Poolinit: {
      const auto& f = in.init();
      if (f.kernel_w < 1 || f.kernel_h < 1 || f.stride < 1 || f.padding < 0 ||
          f.channel_in < 1 || f.channel_out < 1) {
        return "layer parameters out of range";
      }
      if (f.depthwise != 0 && (f.depthwise != 1 || in.opcode == Opcode::Poolinit)) {
        return "depthwise must be 0 or 1 and only set on CONVINIT";
      }
      return {};
    }
    case Opcode::Conv:
    case Opcode::Pool: {
      const auto& f = in.compute();
      if (f.in_bank_ids.empty()) return "compute instruction reads no bank";
      for (int b : f.in_bank_ids) {
        if (b < 0) return "negative bank id";
      }
      if (f.out_bank_id < 0 || f.width_out < 1 || f.lines_produced < 1) {
        return "compute fields out of range";
      }
      return {};
    }
    case Opcode::System: {
      const auto& f = in.system();
      if ((f.sync_bit != 0 && f.sync_bit != 1) ||
          (f.finish_bit != 0 && f.finish_bit != 1) || f.layer_index < 0) {
        return "system fields out of range";
      }
      return {};
    }
  }
  return {};
}

void append_number(std::string& out, std::int64_t v) {
  char buf[24];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, end);
}

void append_list(std::string& out, const std::vector<int>& values) {
  out += '[';
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    append_number(out, values[i]);
  }
  out += ']';
}

template <typename T>
bool parse_number(std::string_view text, T& value) {
  if (text.empty()) return false;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  return ec == std::errc() && ptr == text.data() + text.size();
}

struct Token {
  std::string_view text;
  int column;
};

std::vector<Token> tokenize(std::string_view line) {
  std::vector<Token> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    if (i >= line.size()) break;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    tokens.push_back({line.substr(i, j - i), static_cast<int>(i)});
    i = j;
  }
  return tokens;
}

std::vector<int> parse_list(const Token& tok, std::string_view body, int offset) {
  if (body.size() < 2 || body.front() != '[' || body.back() != ']') {
    throw IsaError("expected [..] list", tok.column + offset);
  }
  std::vector<int> values;
  std::string_view inner = body.substr(1, body.size() - 2);
  std::size_t pos = 0;
  while (!inner.empty() && pos <= inner.size()) {
    std::size_t comma = inner.find(',', pos);
    std::string_view item = inner.substr(
        pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos);
    int v = 0;
    if (!parse_number(item, v)) {
      throw IsaError("bad list element '" + std::string(item) + "'",
                     tok.column + offset + 1 + static_cast<int>(pos));
    }
    values.push_back(v);
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return values;
}

bool overlaps(const BankAccess& a, const BankAccess& b) {
  return a.bank == b.bank && a.word_begin < b.word_end &&
         b.word_begin < a.word_end;
}

constexpr std::int64_t kWholeBank = std::int64_t{1} << 60;

}  // namespace

std::string_view to_string(Opcode op) {
  return kOpcodeNames[static_cast<std::size_t>(op)];
}

std::string_view to_string(Module module) {
  return kModuleNames[static_cast<std::size_t>(module)];
}

std::optional<Opcode> opcode_from_string(std::string_view text) {
  for (std::size_t i = 0; i < kOpcodeNames.size(); ++i) {
    if (kOpcodeNames[i] == text) return static_cast<Opcode>(i);
  }
  return std::nullopt;
}

std::optional<Module> module_from_string(std::string_view text) {
  for (std::size_t i = 0; i < kModuleNames.size(); ++i) {
    if (kModuleNames[i] == text) return static_cast<Module>(i);
  }
  return std::nullopt;
}

Module module_of(Opcode op) {
  switch (op) {
    case Opcode::Load:
      return Module::Load;
    case Opcode::Save:
      return Module::Save;
    case Opcode::Convinit:
    case Opcode::Conv:
      return Module::Conv;
    case Opcode::Poolinit:
    case Opcode::Pool:
      return Module::Misc;
    case Opcode::System:
      return Module::Sys;
  }
  return Module::Sys;
}

Instruction make_load(int id, std::vector<int> deps, TransferFields f) {
  return {id, Opcode::Load, std::move(deps), f};
}
Instruction make_save(int id, std::vector<int> deps, TransferFields f) {
  return {id, Opcode::Save, std::move(deps), f};
}
Instruction make_convinit(int id, std::vector<int> deps, InitFields f) {
  return {id, Opcode::Convinit, std::move(deps), f};
}
Instruction make_poolinit(int id, std::vector<int> deps, InitFields f) {
  f.depthwise = 0;
  return {id, Opcode::Poolinit, std::move(deps), f};
}
Instruction make_conv(int id, std::vector<int> deps, ComputeFields f) {
  return {id, Opcode::Conv, std::move(deps), std::move(f)};
}
Instruction make_pool(int id, std::vector<int> deps, ComputeFields f) {
  return {id, Opcode::Pool, std::move(deps), std::move(f)};
}
Instruction make_system(int id, std::vector<int> deps, SystemFields f) {
  return {id, Opcode::System, std::move(deps), f};
}

bool has_valid_schema(const Instruction& instr) {
  return instr.fields.index() == expected_alternative(instr.opcode);
}

namespace {

void encode_into(std::string& out, const Instruction& in) {
  if (std::string problem = schema_problem(in); !problem.empty()) {
    throw IsaError("instruction " + std::to_string(in.instr_id) + ": " + problem);
  }
  append_number(out, in.instr_id);
  out += ' ';
  out += to_string(in.opcode);
  out += " deps=";
  append_list(out, in.deps);
  auto kv = [&out](std::string_view key, std::int64_t value) {
    out += ' ';
    out += key;
    out += '=';
    append_number(out, value);
  };
  switch (in.opcode) {
    case Opcode::Load:
    case Opcode::Save: {
      const auto& f = in.transfer();
      kv("bank_id", f.bank_id);
      kv("bank_addr", f.bank_addr);
      kv("ddr_addr", f.ddr_addr);
      kv("length_bytes", f.length_bytes);
      break;
    }
    case Opcode::Convinit:
    case Opcode::Poolinit: {
      const auto& f = in.init();
      kv("kernel_w", f.kernel_w);
      kv("kernel_h", f.kernel_h);
      kv("stride", f.stride);
      kv("padding", f.padding);
      kv("channel_in", f.channel_in);
      kv("channel_out", f.channel_out);
      if (in.opcode == Opcode::Convinit) kv("depthwise", f.depthwise);
      break;
    }
    case Opcode::Conv:
    case Opcode::Pool: {
      const auto& f = in.compute();
      out += " in_bank_ids=";
      append_list(out, f.in_bank_ids);
      kv("out_bank_id", f.out_bank_id);
      kv("width_out", f.width_out);
      kv("lines_produced", f.lines_produced);
      break;
    }
    case Opcode::System: {
      const auto& f = in.system();
      kv("sync_bit", f.sync_bit);
      kv("layer_index", f.layer_index);
      kv("finish_bit", f.finish_bit);
      break;
    }
  }
}

}  // namespace

std::string encode(const Instruction& in) {
  std::string out;
  encode_into(out, in);
  return out;
}

Instruction decode(std::string_view line) {
  std::vector<Token> tokens = tokenize(line);
  if (tokens.size() < 3) {
    throw IsaError("expected '<id> <OPCODE> deps=[..] ...'",
                   tokens.empty() ? 0 : tokens.back().column);
  }
  Instruction in;
  if (!parse_number(tokens[0].text, in.instr_id) || in.instr_id < 0) {
    throw IsaError("bad instruction id", tokens[0].column);
  }
  auto op = opcode_from_string(tokens[1].text);
  if (!op) {
    throw IsaError("unknown opcode '" + std::string(tokens[1].text) + "'",
                   tokens[1].column);
  }
  in.opcode = *op;
  const auto& keys = schema_keys(in.opcode);
  std::map<std::string_view, std::pair<std::string_view, const Token*>> values;
  bool have_deps = false;
  for (std::size_t i = 2; i < tokens.size(); ++i) {
    const Token& tok = tokens[i];
    std::size_t eq = tok.text.find('=');
    if (eq == std::string_view::npos) {
      throw IsaError("expected key=value", tok.column);
    }
    std::string_view key = tok.text.substr(0, eq);
    if (key == "deps") {
      if (have_deps) throw IsaError("duplicate field 'deps'", tok.column);
      in.deps = parse_list(tok, tok.text.substr(eq + 1), static_cast<int>(eq + 1));
      have_deps = true;
      continue;
    }
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      throw IsaError("unexpected field '" + std::string(key) + "' for " +
                         std::string(to_string(in.opcode)),
                     tok.column);
    }
    if (!values.emplace(key, std::make_pair(tok.text.substr(eq + 1), &tok)).second) {
      throw IsaError("duplicate field '" + std::string(key) + "'", tok.column);
    }
  }
  if (!have_deps) throw IsaError("missing field 'deps'", static_cast<int>(line.size()));
  for (std::string_view key : keys) {
    if (!values.count(key)) {
      throw IsaError("missing field '" + std::string(key) + "'",
                     static_cast<int>(line.size()));
    }
  }
  auto num = [&values](std::string_view key) -> std::int64_t {
    const auto& [text, tok] = values.at(key);
    std::int64_t v = 0;
    if (!parse_number(text, v)) {
      throw IsaError("bad value for '" + std::string(key) + "'",
                     tok->column + static_cast<int>(key.size()) + 1);
    }
    return v;
  };
  auto small = [&num](std::string_view key) {
    return static_cast<int>(num(key));
  };
  switch (in.opcode) {
    case Opcode::Load:
    case Opcode::Save:
      in.fields = TransferFields{small("bank_id"), num("bank_addr"),
                                 num("ddr_addr"), num("length_bytes")};
      break;
    case Opcode::Convinit:
    case Opcode::Poolinit:
      in.fields = InitFields{small("kernel_w"),   small("kernel_h"),
                             small("stride"),     small("padding"),
                             small("channel_in"), small("channel_out"),
                             in.opcode == Opcode::Convinit ? small("depthwise") : 0};
      break;
    case Opcode::Conv:
    case Opcode::Pool: {
      const auto& [text, tok] = values.at("in_bank_ids");
      ComputeFields f;
      f.in_bank_ids = parse_list(*tok, text, static_cast<int>(sizeof("in_bank_ids")));
      f.out_bank_id = small("out_bank_id");
      f.width_out = small("width_out");
      f.lines_produced = small("lines_produced");
      in.fields = std::move(f);
      break;
    }
    case Opcode::System:
      in.fields = SystemFields{small("sync_bit"), small("layer_index"),
                               small("finish_bit")};
      break;
  }
  if (std::string problem = schema_problem(in); !problem.empty()) {
    throw IsaError(problem, tokens[1].column);
  }
  return in;
}

std::string encode_stream(const std::vector<Instruction>& instrs) {
  std::string out;
  out.reserve(instrs.size() * 96);
  for (const Instruction& in : instrs) {
    encode_into(out, in);
    out += '\n';
  }
  return out;
}

std::vector<Instruction> decode_stream(std::string_view text) {
  std::vector<Instruction> out;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(
        pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    ++line_no;
    if (std::size_t hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") != std::string_view::npos) {
      try {
        out.push_back(decode(line));
      } catch (const IsaError& e) {
        throw IsaError("line " + std::to_string(line_no) + ": " + e.what(),
                       e.column());
      }
    }
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  return out;
}

std::vector<BankAccess> bank_accesses(const Instruction& in) {
  std::vector<BankAccess> out;
  switch (in.opcode) {
    case Opcode::Load:
    case Opcode::Save: {
      const auto& f = in.transfer();
      const std::int64_t words = (f.length_bytes + kBankWordBytes - 1) / kBankWordBytes;
      if (words > 0) {
        out.push_back({f.bank_id, f.bank_addr, f.bank_addr + words,
                       in.opcode == Opcode::Load});
      }
      break;
    }
    case Opcode::Conv:
    case Opcode::Pool: {
      const auto& f = in.compute();
      for (int b : f.in_bank_ids) out.push_back({b, 0, kWholeBank, false});
      out.push_back({f.out_bank_id, 0, kWholeBank, true});
      break;
    }
    default:
      break;
  }
  return out;
}

std::vector<int> HazardTracker::add(const Instruction& in) {
  std::vector<int> deps;
  const Module self = module_of(in.opcode);
  for (const BankAccess& acc : bank_accesses(in)) {
    if (acc.bank >= static_cast<int>(banks_.size())) banks_.resize(acc.bank + 1);
    auto& entries = banks_[acc.bank];
    std::array<bool, kModuleCount> found{};
    for (auto it = entries.rbegin(); it != entries.rend(); ++it) {
      const auto m = static_cast<std::size_t>(it->module);
      if (found[m]) continue;
      if ((acc.write || it->access.write) && overlaps(acc, it->access)) {
        found[m] = true;
        if (it->instr_id != in.instr_id) deps.push_back(it->instr_id);
      }
    }
    // Drop entries made redundant by this access: a covering write orders
    // everything it overlaps, and a covering read from the same module
    // supersedes older reads.
    std::erase_if(entries, [&](const Entry& e) {
      const bool covered = e.access.word_begin >= acc.word_begin &&
                           e.access.word_end <= acc.word_end;
      if (!covered) return false;
      if (acc.write) return true;
      return !e.access.write && e.module == self;
    });
    entries.push_back({in.instr_id, self, acc});
  }
  std::sort(deps.begin(), deps.end());
  deps.erase(std::unique(deps.begin(), deps.end()), deps.end());
  return deps;
}

// ---------------------------------------------------------------------------

std::string_view to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::DuplicateId:
      return "duplicate_id";
    case ViolationKind::ForwardDependency:
      return "forward_dependency";
    case ViolationKind::Schema:
      return "schema";
    case ViolationKind::MissingFinish:
      return "missing_finish";
    case ViolationKind::FinishNotLast:
      return "finish_not_last";
    case ViolationKind::BankOutOfRange:
      return "bank_out_of_range";
    case ViolationKind::UnconfiguredCompute:
      return "unconfigured_compute";
    case ViolationKind::BarrierIncomplete:
      return "barrier_incomplete";
    case ViolationKind::BankHazard:
      return "bank_hazard";
  }
  return "?";
}

std::size_t ValidationReport::count(ViolationKind kind) const {
  return static_cast<std::size_t>(
      std::count_if(violations.begin(), violations.end(),
                    [kind](const Violation& v) { return v.kind == kind; }));
}

namespace {

// Transitive predecessor sets for one barrier segment, one bit per member.
class SegmentReach {
 public:
  void reset(std::size_t capacity) {
    words_ = (capacity + 63) / 64;
    bits_.clear();
    size_ = 0;
    bits_.reserve(capacity * words_);
  }
  std::size_t push() {
    bits_.resize(bits_.size() + words_, 0);
    return size_++;
  }
  void inherit(std::size_t to, std::size_t from) {
    std::uint64_t* dst = &bits_[to * words_];
    const std::uint64_t* src = &bits_[from * words_];
    for (std::size_t w = 0; w < words_; ++w) dst[w] |= src[w];
    dst[from / 64] |= std::uint64_t{1} << (from % 64);
  }
  bool reaches(std::size_t from, std::size_t to) const {
    return (bits_[to * words_ + from / 64] >> (from % 64)) & 1U;
  }
  std::size_t size() const { return size_; }

 private:
  std::size_t words_ = 0;
  std::size_t size_ = 0;
  std::vector<std::uint64_t> bits_;
};

}  // namespace

ValidationReport check_stream(const InstructionStream& stream,
                              const BankGeometry& geometry) {
  ValidationReport report;
  auto flag = [&report](ViolationKind kind, int id, int other, std::string msg) {
    report.violations.push_back({kind, id, other, std::move(msg)});
  };
  const auto& instrs = stream.instructions;
  if (instrs.empty() || instrs.back().opcode != Opcode::System ||
      !has_valid_schema(instrs.back()) || instrs.back().system().finish_bit != 1) {
    flag(ViolationKind::MissingFinish, instrs.empty() ? -1 : instrs.back().instr_id,
         -1, "stream does not end with a finish SYSTEM");
  }

  std::map<int, std::size_t> position;
  for (std::size_t i = 0; i < instrs.size(); ++i) {
    if (!position.emplace(instrs[i].instr_id, i).second) {
      flag(ViolationKind::DuplicateId, instrs[i].instr_id, -1,
           "instruction id reused");
    }
  }

  // Segment bookkeeping: members are addressed by their offset in the segment.
  std::size_t seg_begin = 0;
  auto segment_end = [&](std::size_t from) {
    std::size_t j = from;
    while (j < instrs.size() && instrs[j].opcode != Opcode::System) ++j;
    return std::min(j + 1, instrs.size());
  };
  SegmentReach reach;
  std::size_t seg_end = segment_end(0);
  reach.reset(seg_end - seg_begin);
  std::array<long, kModuleCount> last_on_module;
  last_on_module.fill(-1);
  struct Access {
    std::size_t member;
    BankAccess access;
  };
  std::map<int, std::vector<Access>> bank_log;
  bool conv_configured = false;
  bool pool_configured = false;
  const std::int64_t bank_words = geometry.bank_bytes / kBankWordBytes;
  std::size_t hazards = 0;

  for (std::size_t i = 0; i < instrs.size(); ++i) {
    if (i == seg_end) {
      seg_begin = i;
      seg_end = segment_end(i);
      reach.reset(seg_end - seg_begin);
      last_on_module.fill(-1);
      bank_log.clear();
    }
    const Instruction& in = instrs[i];
    const std::size_t member = reach.push();

    if (std::string p = schema_problem(in); !p.empty()) {
      flag(ViolationKind::Schema, in.instr_id, -1, p);
      continue;
    }
    if (in.opcode == Opcode::System && in.system().finish_bit == 1 &&
        i + 1 != instrs.size()) {
      flag(ViolationKind::FinishNotLast, in.instr_id, -1,
           "finish SYSTEM is not the last instruction");
    }
    for (int d : in.deps) {
      auto it = position.find(d);
      if (it == position.end() || it->second >= i) {
        flag(ViolationKind::ForwardDependency, in.instr_id, d,
             "dependency on " + std::to_string(d) +
                 " which is not an earlier instruction");
        continue;
      }
      if (it->second >= seg_begin) reach.inherit(member, it->second - seg_begin);
    }
    const auto mod = static_cast<std::size_t>(module_of(in.opcode));
    if (last_on_module[mod] >= 0) {
      reach.inherit(member, static_cast<std::size_t>(last_on_module[mod]));
    }
    last_on_module[mod] = static_cast<long>(member);

    if (in.opcode == Opcode::Convinit) conv_configured = true;
    if (in.opcode == Opcode::Poolinit) pool_configured = true;
    if ((in.opcode == Opcode::Conv && !conv_configured) ||
        (in.opcode == Opcode::Pool && !pool_configured)) {
      flag(ViolationKind::UnconfiguredCompute, in.instr_id, -1,
           "compute instruction before any matching init");
    }

    for (const BankAccess& acc : bank_accesses(in)) {
      if (geometry.bank_count > 0 && acc.bank >= geometry.bank_count) {
        flag(ViolationKind::BankOutOfRange, in.instr_id, -1,
             "bank " + std::to_string(acc.bank) + " does not exist");
        continue;
      }
      if (bank_words > 0 &&
          (in.opcode == Opcode::Load || in.opcode == Opcode::Save) &&
          acc.word_end > bank_words) {
        flag(ViolationKind::BankOutOfRange, in.instr_id, -1,
             "transfer runs past the end of bank " + std::to_string(acc.bank));
      }
      auto& log = bank_log[acc.bank];
      for (const Access& prev : log) {
        if (!(acc.write || prev.access.write) || !overlaps(acc, prev.access)) continue;
        if (!reach.reaches(prev.member, member) && hazards < 1000) {
          ++hazards;
          const int other = instrs[seg_begin + prev.member].instr_id;
          flag(ViolationKind::BankHazard, in.instr_id, other,
               "unordered access to bank " + std::to_string(acc.bank) +
                   " with instruction " + std::to_string(other));
        }
      }
      log.push_back({member, acc});
    }

    if (in.opcode == Opcode::System) {
      for (std::size_t m = 0; m < member; ++m) {
        if (!reach.reaches(m, member)) {
          flag(ViolationKind::BarrierIncomplete, in.instr_id,
               instrs[seg_begin + m].instr_id,
               "SYSTEM does not wait for instruction " +
                   std::to_string(instrs[seg_begin + m].instr_id));
          break;
        }
      }
    }
  }
  return report;
}

}  // namespace fvirt
