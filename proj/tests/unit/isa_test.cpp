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

#include <gtest/gtest.h>

#include <random>

#include "fvirt/error.hpp"
#include "fvirt/isa.hpp"

using namespace fvirt;

TEST(Isa, EncodesLoadCanonically) {
  const Instruction in = make_load(0, {}, {2, 0, 4096, 1024});
  EXPECT_EQ(encode(in), "0 LOAD deps=[] bank_id=2 bank_addr=0 ddr_addr=4096 length_bytes=1024");
}

TEST(Isa, EncodesSystemCanonically) {
  const Instruction in = make_system(9, {8}, {1, 3, 0});
  EXPECT_EQ(encode(in), "9 SYSTEM deps=[8] sync_bit=1 layer_index=3 finish_bit=0");
}

TEST(Isa, DecodeAcceptsAnyKeyOrder) {
  const Instruction in =
      decode("4 SAVE length_bytes=64 deps=[1,2] ddr_addr=128 bank_id=3 bank_addr=5");
  EXPECT_EQ(in, make_save(4, {1, 2}, {3, 5, 128, 64}));
}

TEST(Isa, DecodeReportsColumnOfBadToken) {
  const std::string line = "0 LOAD deps=[] bank_id=x bank_addr=0 ddr_addr=0 length_bytes=1";
  try {
    decode(line);
    FAIL();
  } catch (const IsaError& e) {
    EXPECT_EQ(e.column(), static_cast<int>(line.find("bank_id=x") + 8));
  }
}

TEST(Isa, DecodeRejectsSchemaViolations) {
  EXPECT_THROW(decode("0 FROB deps=[]"), IsaError);
  EXPECT_THROW(decode("0 LOAD deps=[] bank_id=1 bank_addr=0 ddr_addr=0"), IsaError);
  EXPECT_THROW(decode("0 LOAD deps=[] bank_id=1 bank_addr=0 ddr_addr=0 length_bytes=1 x=2"),
               IsaError);
  EXPECT_THROW(decode("0 SYSTEM deps=[] sync_bit=1 sync_bit=1 layer_index=0 finish_bit=0"),
               IsaError);
}

TEST(Isa, EncodeRejectsMismatchedFields) {
  Instruction bad = make_load(0, {}, {0, 0, 0, 1});
  bad.opcode = Opcode::Conv;
  EXPECT_FALSE(has_valid_schema(bad));
  EXPECT_THROW(encode(bad), IsaError);
}

namespace {

Instruction random_instruction(std::mt19937_64& rng, int id) {
  auto r = [&rng](int n) { return static_cast<int>(rng() % static_cast<std::uint64_t>(n)); };
  std::vector<int> deps;
  for (int d = 0; d < id; ++d) {
    if (r(4) == 0) deps.push_back(d);
  }
  switch (r(7)) {
    case 0:
      return make_load(id, deps, {r(16), r(1024), static_cast<std::int64_t>(rng() >> 20), r(1 << 20)});
    case 1:
      return make_save(id, deps, {r(16), r(1024), static_cast<std::int64_t>(rng() >> 20), r(1 << 20)});
    case 2:
      return make_convinit(id, deps, {1 + r(7), 1 + r(7), 1 + r(3), r(4), 1 + r(512), 1 + r(512), r(2)});
    case 3:
      return make_poolinit(id, deps, {1 + r(7), 1 + r(7), 1 + r(3), r(4), 1 + r(512), 1 + r(512), 0});
    case 4: {
      std::vector<int> banks;
      for (int b = 0, n = 1 + r(4); b < n; ++b) banks.push_back(r(16));
      return make_conv(id, deps, {banks, r(16), 1 + r(224), 1 + r(4)});
    }
    case 5:
      return make_pool(id, deps, {{r(16)}, r(16), 1 + r(224), 1});
    default:
      return make_system(id, deps, {r(2), r(100), r(2)});
  }
}

}  // namespace

TEST(Isa, RoundTripsRandomInstructions) {
  std::mt19937_64 rng(11);
  std::vector<Instruction> stream;
  for (int i = 0; i < 2000; ++i) {
    const Instruction in = random_instruction(rng, i % 50);
    ASSERT_EQ(decode(encode(in)), in) << encode(in);
    stream.push_back(in);
  }
  EXPECT_EQ(decode_stream(encode_stream(stream)), stream);
}

TEST(Isa, StreamDecoderSkipsCommentsAndNamesLine) {
  const auto v = decode_stream("# header\n\n0 SYSTEM deps=[] sync_bit=0 layer_index=0 finish_bit=1\n");
  ASSERT_EQ(v.size(), 1u);
  try {
    decode_stream("# c\n0 SYSTEM deps=[]\n");
    FAIL();
  } catch (const IsaError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(CheckStream, EmptyStreamMissesFinish) {
  const ValidationReport r = check_stream({});
  EXPECT_EQ(r.count(ViolationKind::MissingFinish), 1u);
}

TEST(CheckStream, FlagsUnorderedLoadAndConv) {
  InstructionStream s;
  s.instructions = {
      make_load(0, {}, {0, 0, 0, 4096}),
      make_convinit(1, {}, {3, 3, 1, 1, 16, 16, 0}),
      make_conv(2, {1}, {{0}, 1, 56, 1}),
      make_system(3, {0, 2}, {0, 0, 1}),
  };
  const ValidationReport r = check_stream(s, {16, 65536});
  ASSERT_EQ(r.count(ViolationKind::BankHazard), 1u);
  const Violation& v = r.violations.front();
  EXPECT_EQ(v.instr_id, 2);
  EXPECT_EQ(v.other_id, 0);

  s.instructions[2].deps = {0, 1};
  EXPECT_TRUE(check_stream(s, {16, 65536}).ok());
}

TEST(CheckStream, FlagsStructuralProblems) {
  InstructionStream s;
  s.instructions = {
      make_conv(0, {}, {{0}, 1, 4, 1}),
      make_load(0, {5}, {20, 0, 0, 64}),
      make_system(2, {}, {0, 0, 1}),
      make_system(3, {}, {1, 0, 0}),
  };
  const ValidationReport r = check_stream(s, {16, 65536});
  EXPECT_GE(r.count(ViolationKind::UnconfiguredCompute), 1u);
  EXPECT_GE(r.count(ViolationKind::DuplicateId), 1u);
  EXPECT_GE(r.count(ViolationKind::ForwardDependency), 1u);
  EXPECT_GE(r.count(ViolationKind::BankOutOfRange), 1u);
  EXPECT_GE(r.count(ViolationKind::FinishNotLast), 1u);
  EXPECT_GE(r.count(ViolationKind::MissingFinish), 1u);
  EXPECT_GE(r.count(ViolationKind::BarrierIncomplete), 1u);
}

TEST(CheckStream, TransferPastBankEndIsOutOfRange) {
  InstructionStream s;
  s.instructions = {make_load(0, {}, {0, 1000, 0, 64 * 100}), make_system(1, {0}, {0, 0, 1})};
  EXPECT_EQ(check_stream(s, {16, 65536}).count(ViolationKind::BankOutOfRange), 1u);
}

TEST(HazardTracker, ReturnsNewestConflictPerModule) {
  HazardTracker t;
  EXPECT_TRUE(t.add(make_load(0, {}, {0, 0, 0, 640})).empty());
  EXPECT_TRUE(t.add(make_convinit(1, {}, {1, 1, 1, 0, 16, 16, 0})).empty());
  EXPECT_EQ(t.add(make_conv(2, {1}, {{0}, 1, 4, 1})), std::vector<int>{0});
  // overwriting bank 0 waits for the reader; bank 1's reader is the Save
  EXPECT_EQ(t.add(make_load(3, {}, {0, 0, 0, 64})), (std::vector<int>{0, 2}));
  EXPECT_EQ(t.add(make_save(4, {}, {1, 0, 0, 64})), std::vector<int>{2});
}
