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

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace fvirt {

enum class Opcode { Load, Save, Convinit, Conv, Poolinit, Pool, System };

// Hardware module that executes an opcode inside one core.
enum class Module { Load, Save, Conv, Misc, Sys };

inline constexpr int kModuleCount = 5;

std::string_view to_string(Opcode op);
std::string_view to_string(Module module);
std::optional<Opcode> opcode_from_string(std::string_view text);
std::optional<Module> module_from_string(std::string_view text);
Module module_of(Opcode op);

// On-chip addresses are in 512-bit words.
inline constexpr std::int64_t kBankWordBytes = 64;

// Load: DDR -> bank. Save: bank -> DDR. A transfer describes a (possibly
// strided) region by its first byte and total byte count.
struct TransferFields {
  int bank_id = 0;
  std::int64_t bank_addr = 0;
  std::int64_t ddr_addr = 0;
  std::int64_t length_bytes = 0;

  bool operator==(const TransferFields&) const = default;
};

// Convinit / Poolinit register-file configuration. `depthwise` is only
// meaningful (and only encoded) for Convinit.
struct InitFields {
  int kernel_w = 1;
  int kernel_h = 1;
  int stride = 1;
  int padding = 0;
  int channel_in = 1;
  int channel_out = 1;
  int depthwise = 0;

  bool operator==(const InitFields&) const = default;
};

// Conv produces `lines_produced` (at most PP) output lines; Pool one line.
// Every bank listed in in_bank_ids is read in full; out_bank_id is written.
struct ComputeFields {
  std::vector<int> in_bank_ids;
  int out_bank_id = 0;
  int width_out = 1;
  int lines_produced = 1;

  bool operator==(const ComputeFields&) const = default;
};

struct SystemFields {
  int sync_bit = 0;
  int layer_index = 0;
  int finish_bit = 0;

  bool operator==(const SystemFields&) const = default;
};

using InstructionFields =
    std::variant<TransferFields, InitFields, ComputeFields, SystemFields>;

struct Instruction {
  int instr_id = 0;
  Opcode opcode = Opcode::System;
  std::vector<int> deps;
  InstructionFields fields = SystemFields{};

  bool operator==(const Instruction&) const = default;

  const TransferFields& transfer() const { return std::get<TransferFields>(fields); }
  const InitFields& init() const { return std::get<InitFields>(fields); }
  const ComputeFields& compute() const { return std::get<ComputeFields>(fields); }
  const SystemFields& system() const { return std::get<SystemFields>(fields); }
};

Instruction make_load(int id, std::vector<int> deps, TransferFields f);
Instruction make_save(int id, std::vector<int> deps, TransferFields f);
Instruction make_convinit(int id, std::vector<int> deps, InitFields f);
Instruction make_poolinit(int id, std::vector<int> deps, InitFields f);
Instruction make_conv(int id, std::vector<int> deps, ComputeFields f);
Instruction make_pool(int id, std::vector<int> deps, ComputeFields f);
Instruction make_system(int id, std::vector<int> deps, SystemFields f);

// True when the active variant alternative matches the opcode.
bool has_valid_schema(const Instruction& instr);

struct InstructionStream {
  int core_id = 0;
  std::vector<Instruction> instructions;

  bool operator==(const InstructionStream&) const = default;
};

// `<id> <OPCODE> deps=[..] key=val ...` with keys in fixed schema order.
// Throws IsaError on a schema violation.
std::string encode(const Instruction& instr);

// Inverse of encode. Throws IsaError with the column of the bad token.
Instruction decode(std::string_view line);

// Instruction file: one instruction per line, '#' comments, blanks ignored.
std::string encode_stream(const std::vector<Instruction>& instrs);
std::vector<Instruction> decode_stream(std::string_view text);

// ---------------------------------------------------------------------------
// Stream validation.

enum class ViolationKind {
  DuplicateId,
  ForwardDependency,
  Schema,
  MissingFinish,
  FinishNotLast,
  BankOutOfRange,
  UnconfiguredCompute,
  BarrierIncomplete,
  BankHazard,
};

std::string_view to_string(ViolationKind kind);

struct Violation {
  ViolationKind kind;
  int instr_id = -1;
  int other_id = -1;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  std::size_t count(ViolationKind kind) const;
};

// Bank geometry used for range checks. Zero disables the corresponding check.
struct BankGeometry {
  int bank_count = 0;
  std::int64_t bank_bytes = 0;
};

// Reports dependency, schema, finish, barrier and bank-hazard problems.
// A hazard is a pair of conflicting bank accesses (write/read or write/write)
// with no ordering path between them; ordering comes from explicit deps,
// in-order execution on a module, and System barriers.
ValidationReport check_stream(const InstructionStream& stream,
                              const BankGeometry& geometry = {});

// ---------------------------------------------------------------------------
// Bank access bookkeeping shared by code generation and assembly.

struct BankAccess {
  int bank = 0;
  std::int64_t word_begin = 0;
  std::int64_t word_end = 0;  // exclusive; whole-bank reads use a huge bound
  bool write = false;
};

std::vector<BankAccess> bank_accesses(const Instruction& instr);

// Derives hazard dependencies incrementally. For every new instruction it
// returns the newest conflicting earlier instruction on each module, which
// is sufficient because modules execute in program order.
class HazardTracker {
 public:
  std::vector<int> add(const Instruction& instr);
  void clear() {
    for (auto& b : banks_) b.clear();
  }

 private:
  struct Entry {
    int instr_id;
    Module module;
    BankAccess access;
  };
  std::vector<std::vector<Entry>> banks_;
};

}  // namespace fvirt
