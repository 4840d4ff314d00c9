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

#include "fvirt/static_compiler.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "fvirt/error.hpp"

namespace fvirt {
namespace {

using json = nlohmann::ordered_json;

std::int64_t align_up(std::int64_t v, std::int64_t a) { return (v + a - 1) / a * a; }

std::vector<int> even_split(int units, int parts) {
  std::vector<int> sizes(static_cast<std::size_t>(parts), units / parts);
  for (int i = 0; i < units % parts; ++i) ++sizes[static_cast<std::size_t>(i)];
  return sizes;
}

// A tensor as seen by a consumer: its DDR base and HWC extents.
struct TensorView {
  std::int64_t base = 0;
  int h = 1;
  int w = 1;
  int c = 1;
};

TensorView source_view(const ModelGraph& model, const DdrLayout& ddr,
                       const LayerDescriptor& consumer, int source_id) {
  if (source_id < 0) {
    return {ddr.input_base, consumer.height_in, consumer.width_in, consumer.channel_in};
  }
  const LayerDescriptor& p = model.layers[static_cast<std::size_t>(source_id)];
  TensorView v{ddr.output_base[static_cast<std::size_t>(source_id)], p.height_out,
               p.width_out, p.channel_out};
  if (v.h != consumer.height_in || v.w != consumer.width_in) {
    // Flattened into a 1x1 map; HWC order keeps the bytes contiguous.
    v = {v.base, 1, 1, p.height_out * p.width_out * p.channel_out};
  }
  return v;
}

// Part of one source that a tile reads: channels [c_lo, c_hi) of the source
// tensor over input columns [x_lo, x_hi).
struct SourceSlice {
  TensorView view;
  int c_lo = 0;
  int c_hi = 0;
};

class IfpBuilder {
 public:
  IfpBuilder(const CoreConfig& core) : core_(core) {}

  int next_id() const { return static_cast<int>(out_.size()); }

  void emit(Instruction in) {
    in.instr_id = next_id();
    in.deps = tracker_.add(in);
    out_.push_back(std::move(in));
  }

  // Emits Loads for `bytes` bytes starting at DDR `ddr` into the region
  // starting at byte `offset` of bank `first_bank`, split at bank edges.
  // Returns the banks touched.
  std::vector<int> load(std::int64_t ddr, std::int64_t bytes, int first_bank,
                        std::int64_t offset) {
    std::vector<int> banks;
    while (bytes > 0) {
      const int bank = first_bank + static_cast<int>(offset / core_.bank_bytes);
      const std::int64_t in_bank = offset % core_.bank_bytes;
      const std::int64_t n = std::min(bytes, core_.bank_bytes - in_bank);
      emit(make_load(0, {}, {bank, in_bank / kBankWordBytes, ddr, n}));
      banks.push_back(bank);
      ddr += n;
      offset += n;
      bytes -= n;
    }
    return banks;
  }

  std::vector<Instruction> take() { return std::move(out_); }

 private:
  const CoreConfig& core_;
  HazardTracker tracker_;
  std::vector<Instruction> out_;
};

std::string layer_tag(int layer_id) { return "layer " + std::to_string(layer_id); }

}  // namespace

std::vector<TileSpec> tile_layer(const LayerDescriptor& layer, Method method,
                                 int tile_count, int ocp) {
  if (tile_count < 1) throw CompileError("tile count must be >= 1");
  std::vector<TileSpec> tiles;
  if (method == Method::OutputChannel) {
    const int groups = (layer.channel_out + ocp - 1) / ocp;
    int start = 0;
    for (int g : even_split(groups, std::min(groups, tile_count))) {
      const int size = std::min(g * ocp, layer.channel_out - start);
      tiles.push_back({Method::OutputChannel, start, size});
      start += size;
    }
    return tiles;
  }
  if (method != Method::Width) throw CompileError("tiles are Width or OutputChannel");
  int start = 0;
  for (int s : even_split(layer.width_out, std::min(layer.width_out, tile_count))) {
    tiles.push_back({Method::Width, start, s});
    start += s;
  }
  return tiles;
}

DdrLayout DdrLayout::for_model(const ModelGraph& model) {
  DdrLayout d;
  std::int64_t cursor = 0;
  if (!model.layers.empty()) {
    cursor = align_up(input_bytes(model.layers.front()), kBankWordBytes);
  }
  for (const LayerDescriptor& l : model.layers) {
    d.weight_base.push_back(cursor);
    cursor = align_up(cursor + weight_bytes(l), kBankWordBytes);
  }
  for (const LayerDescriptor& l : model.layers) {
    d.output_base.push_back(cursor);
    cursor = align_up(cursor + output_bytes(l), kBankWordBytes);
  }
  d.total_bytes = cursor;
  return d;
}

InstructionFramePackage generate_ifp(const ModelGraph& model, const DdrLayout& ddr,
                                     int layer_id, Method method, int tile_index,
                                     const TileSpec& tile, const CoreConfig& core) {
  if (layer_id < 0 || layer_id >= static_cast<int>(model.layers.size())) {
    throw CompileError("no such layer " + std::to_string(layer_id));
  }
  const LayerDescriptor& L = model.layers[static_cast<std::size_t>(layer_id)];
  const bool oc = tile.dimension == Method::OutputChannel;
  const int extent = oc ? L.channel_out : L.width_out;
  if (tile.size < 1 || tile.start < 0 || tile.start + tile.size > extent) {
    throw CompileError(layer_tag(layer_id) + ": tile [" + std::to_string(tile.start) +
                       ", " + std::to_string(tile.start + tile.size) +
                       ") exceeds extent " + std::to_string(extent));
  }
  const int c0 = oc ? tile.start : 0;
  const int c1 = oc ? tile.start + tile.size : L.channel_out;
  const int x0 = oc ? 0 : tile.start;
  const int x1 = oc ? L.width_out : tile.start + tile.size;
  const bool pool = L.kind == LayerKind::Pool;
  const bool depthwise = L.kind == LayerKind::DepthwiseConv;

  const int B = core.bank_count;
  const int weight_bank0 = 0;
  const std::int64_t weight_capacity = core.bank_bytes * (B / 2);
  const int input_bank0 = B / 2;
  const std::int64_t input_capacity = core.bank_bytes * (B / 4);
  const int output_bank0 = 3 * B / 4;
  const int output_banks = B / 4;

  // Input window of the tile.
  const int xa = std::max(0, x0 * L.stride - L.padding);
  const int xb = std::min(L.width_in, (x1 - 1) * L.stride - L.padding + L.kernel_w);
  const int cols = std::max(1, xb - xa);
  const int need_lo = pool || depthwise ? c0 : 0;
  const int need_hi = pool || depthwise ? c1 : L.channel_in;
  std::vector<SourceSlice> slices;
  for (const InputSource& src : input_sources(model, layer_id)) {
    const int lo = std::max(need_lo, src.channel_offset);
    const int hi = std::min(need_hi, src.channel_offset + src.channels);
    if (lo >= hi) continue;
    slices.push_back({source_view(model, ddr, L, src.layer_id),
                      lo - src.channel_offset, hi - src.channel_offset});
  }

  // Output rows produced per compute instruction.
  const int lines = pool ? 1 : core.pp;
  const int bands = (L.height_out + lines - 1) / lines;
  auto band_rows = [&](int j, int& ya, int& yb) {
    const int r0 = j * lines;
    const int r1 = std::min(L.height_out, r0 + lines);
    ya = std::max(0, r0 * L.stride - L.padding_h);
    yb = std::min(L.height_in, (r1 - 1) * L.stride - L.padding_h + L.kernel_h);
    if (yb <= ya) yb = std::min(L.height_in, ya + 1);
  };

  std::int64_t slab = 0;
  for (const SourceSlice& s : slices) {
    slab += static_cast<std::int64_t>(s.view.h) * cols * (s.c_hi - s.c_lo);
  }
  const bool resident =
      slab + static_cast<std::int64_t>(bands) * static_cast<std::int64_t>(slices.size()) *
                 kBankWordBytes <=
      input_capacity;
  const std::int64_t half = input_capacity / 2;

  // Weight passes in units of ocp channel groups. Several passes alternate
  // between the two halves of the weight banks when a pass fits in a half.
  const std::int64_t per_oc = pool ? 0 : weight_bytes(L) / L.channel_out;
  int channels_per_pass = c1 - c0;
  std::int64_t weight_slot = weight_capacity;
  if (per_oc > 0 && per_oc * (c1 - c0) > weight_capacity) {
    const std::int64_t group_bytes = per_oc * std::min(core.ocp, c1 - c0);
    if (group_bytes > weight_capacity) {
      throw CompileError(layer_tag(layer_id) + ": weights of one channel group (" +
                         std::to_string(group_bytes) + " bytes) exceed on-chip capacity " +
                         std::to_string(weight_capacity));
    }
    if (group_bytes <= weight_capacity / 2) weight_slot = weight_capacity / 2;
    channels_per_pass = static_cast<int>(weight_slot / (per_oc * core.ocp)) * core.ocp;
  }
  const int slot_banks = static_cast<int>(weight_slot / core.bank_bytes);

  IfpBuilder b(core);
  // Resident slabs are staged once, ahead of any compute, so that no input
  // bank is rewritten after a compute instruction has read it.
  struct Chunk {
    std::size_t slice;
    int row_lo, row_hi;
    std::int64_t offset;  // byte offset of row_lo inside the input banks
  };
  std::vector<Chunk> resident_chunks;
  auto row_span = [&](const SourceSlice& sl, int ya, int yb, int& lo, int& hi) {
    lo = sl.view.h == 1 ? 0 : ya;
    hi = sl.view.h == 1 ? 1 : yb;
  };
  auto ddr_of = [&](const SourceSlice& sl, int row) {
    return sl.view.base +
           (static_cast<std::int64_t>(row) * sl.view.w + (sl.view.w == 1 ? 0 : xa)) *
               sl.view.c +
           sl.c_lo;
  };
  auto row_bytes_of = [&](const SourceSlice& sl) {
    return static_cast<std::int64_t>(cols) * (sl.c_hi - sl.c_lo);
  };
  auto stage_resident = [&]() {
    std::vector<int> loaded_until(slices.size(), 0);
    std::int64_t cursor = 0;
    for (int j = 0; j < bands; ++j) {
      int ya = 0, yb = 0;
      band_rows(j, ya, yb);
      for (std::size_t s = 0; s < slices.size(); ++s) {
        int lo = 0, hi = 0;
        row_span(slices[s], ya, yb, lo, hi);
        if (loaded_until[s] >= hi) continue;
        const int from = std::max(loaded_until[s], lo);
        const std::int64_t bytes = (hi - from) * row_bytes_of(slices[s]);
        b.load(ddr_of(slices[s], from), bytes, input_bank0, cursor);
        resident_chunks.push_back({s, from, hi, cursor});
        cursor = align_up(cursor + bytes, kBankWordBytes);
        loaded_until[s] = hi;
      }
    }
  };
  int compute_count = 0;
  int pass = 0;

  for (int p0 = c0; p0 < c1; p0 += channels_per_pass, ++pass) {
    const int p1 = std::min(c1, p0 + channels_per_pass);
    std::vector<int> weight_banks;
    if (per_oc > 0) {
      const int first_bank =
          weight_bank0 + (weight_slot < weight_capacity ? (pass % 2) * slot_banks : 0);
      weight_banks = b.load(ddr.weight_base[static_cast<std::size_t>(layer_id)] + p0 * per_oc,
                            (p1 - p0) * per_oc, first_bank, 0);
    }
    if (resident && pass == 0) stage_resident();
    InitFields init{L.kernel_w, L.kernel_h, L.stride, L.padding,
                    pool || depthwise ? p1 - p0 : L.channel_in, p1 - p0,
                    depthwise ? 1 : 0};
    if (pool) {
      b.emit(make_poolinit(0, {}, init));
    } else {
      b.emit(make_convinit(0, {}, init));
    }

    for (int j = 0; j < bands; ++j) {
      int ya = 0, yb = 0;
      band_rows(j, ya, yb);
      std::vector<int> in_banks = weight_banks;
      std::int64_t stream_cursor = (j % 2) * half;
      for (std::size_t s = 0; s < slices.size(); ++s) {
        const SourceSlice& sl = slices[s];
        const std::int64_t row_bytes = row_bytes_of(sl);
        int lo_row = 0, hi_row = 0;
        row_span(sl, ya, yb, lo_row, hi_row);
        if (resident) {
          for (const Chunk& c : resident_chunks) {
            if (c.slice != s || c.row_hi <= lo_row || c.row_lo >= hi_row) continue;
            const std::int64_t first =
                c.offset + (std::max(lo_row, c.row_lo) - c.row_lo) * row_bytes;
            const std::int64_t last =
                c.offset + (std::min(hi_row, c.row_hi) - c.row_lo) * row_bytes - 1;
            for (std::int64_t bk = first / core.bank_bytes; bk <= last / core.bank_bytes; ++bk) {
              in_banks.push_back(input_bank0 + static_cast<int>(bk));
            }
          }
        } else {
          const std::int64_t bytes = (hi_row - lo_row) * row_bytes;
          if (stream_cursor + bytes > (j % 2 + 1) * half) {
            throw CompileError(layer_tag(layer_id) + ": input rows for one band (" +
                               std::to_string(stream_cursor + bytes - (j % 2) * half) +
                               " bytes) exceed a staging buffer of " +
                               std::to_string(half) + " bytes");
          }
          auto banks = b.load(ddr_of(sl, lo_row), bytes, input_bank0, stream_cursor);
          in_banks.insert(in_banks.end(), banks.begin(), banks.end());
          stream_cursor = align_up(stream_cursor + bytes, kBankWordBytes);
        }
      }
      std::sort(in_banks.begin(), in_banks.end());
      in_banks.erase(std::unique(in_banks.begin(), in_banks.end()), in_banks.end());

      const int r0 = j * lines;
      const int r1 = std::min(L.height_out, r0 + lines);
      const std::int64_t out_bytes =
          static_cast<std::int64_t>(r1 - r0) * (x1 - x0) * (p1 - p0);
      if (out_bytes > core.bank_bytes) {
        throw CompileError(layer_tag(layer_id) + ": output band of " +
                           std::to_string(out_bytes) + " bytes exceeds one bank");
      }
      const int out_bank = output_bank0 + compute_count % output_banks;
      ComputeFields cf{in_banks, out_bank, x1 - x0, r1 - r0};
      b.emit(pool ? make_pool(0, {}, cf) : make_conv(0, {}, cf));
      ++compute_count;
      const std::int64_t out_ddr =
          ddr.output_base[static_cast<std::size_t>(layer_id)] +
          (static_cast<std::int64_t>(r0) * L.width_out + x0) * L.channel_out + p0;
      b.emit(make_save(0, {}, {out_bank, 0, out_ddr, out_bytes}));
    }
  }

  InstructionFramePackage ifp;
  ifp.layer_id = layer_id;
  ifp.method = method;
  ifp.tile_index = tile_index;
  ifp.tile = tile;
  ifp.instructions = b.take();
  return ifp;
}

const InstructionFramePackage& StaticArtifact::ifp(int layer_id, Method method,
                                                  int tile) const {
  auto it = ifps.find(LutKey{layer_id, method, tile});
  if (it == ifps.end()) {
    throw CompileError("artifact has no package for layer " + std::to_string(layer_id) +
                       " method " + std::string(to_string(method)) + " tile " +
                       std::to_string(tile));
  }
  return it->second;
}

int StaticArtifact::tile_count(int layer_id, Method method) const {
  int n = 0;
  for (auto it = ifps.lower_bound(LutKey{layer_id, method, 0});
       it != ifps.end() && it->first.layer_id == layer_id && it->first.method == method;
       ++it) {
    ++n;
  }
  return n;
}

LatencyLUT build_lut(const StaticArtifact& a) {
  LatencyLUT lut;
  for (const auto& [key, ifp] : a.ifps) {
    lut.set(key, dag_latency(build_dag(ifp.instructions, a.core, a.mem)));
  }
  for (std::size_t l = 0; l < a.untiled.size(); ++l) {
    lut.set(LutKey{static_cast<int>(l), Method::Untiled, 0},
            dag_latency(build_dag(a.untiled[l], a.core, a.mem)));
  }
  return lut;
}

StaticArtifact compile_static(const ModelGraph& model, const CoreConfig& core,
                              int max_tiles, const MemoryModel& mem) {
  const auto t0 = std::chrono::steady_clock::now();
  core.validate();
  mem.validate();
  if (max_tiles < 1) throw CompileError("max_tiles must be >= 1");
  validate_model(model);
  StaticArtifact a;
  a.model = model;
  a.core = core;
  a.mem = mem;
  a.max_tiles = max_tiles;
  a.ddr = DdrLayout::for_model(model);
  for (const LayerDescriptor& l : model.layers) {
    for (Method m : {Method::Width, Method::OutputChannel}) {
      const auto tiles = tile_layer(l, m, max_tiles, core.ocp);
      for (std::size_t t = 0; t < tiles.size(); ++t) {
        a.ifps.emplace(LutKey{l.layer_id, m, static_cast<int>(t)},
                       generate_ifp(model, a.ddr, l.layer_id, m, static_cast<int>(t),
                                    tiles[t], core));
      }
    }
    a.untiled.push_back(
        generate_ifp(model, a.ddr, l.layer_id, Method::Untiled, 0, full_tile(l), core)
            .instructions);
  }
  a.lut = build_lut(a);
  a.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return a;
}

// ---------------------------------------------------------------------------
// Persistence.

namespace {

json core_to_json(const CoreConfig& c) {
  return json{{"pp", c.pp},
              {"icp", c.icp},
              {"ocp", c.ocp},
              {"clock_hz", c.clock_hz},
              {"port_bits", c.port_bits},
              {"bank_count", c.bank_count},
              {"bank_bytes", c.bank_bytes}};
}

CoreConfig core_from_json(const json& j) {
  CoreConfig c;
  c.pp = j.at("pp");
  c.icp = j.at("icp");
  c.ocp = j.at("ocp");
  c.clock_hz = j.at("clock_hz");
  c.port_bits = j.at("port_bits");
  c.bank_count = j.at("bank_count");
  c.bank_bytes = j.at("bank_bytes");
  return c;
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  out << text;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

std::string ifp_name(const LutKey& k) {
  return std::to_string(k.layer_id) + "_" + std::string(to_string(k.method)) + "_" +
         std::to_string(k.tile_index) + ".inst";
}

}  // namespace

void save_artifact(const StaticArtifact& a, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "ifps");
  fs::create_directories(dir / "untiled");
  for (const auto& [key, ifp] : a.ifps) {
    write_file(dir / "ifps" / ifp_name(key), encode_stream(ifp.instructions));
  }
  for (std::size_t l = 0; l < a.untiled.size(); ++l) {
    write_file(dir / "untiled" / (std::to_string(l) + ".inst"), encode_stream(a.untiled[l]));
  }
  write_file(dir / "lut.csv", a.lut.to_csv());
  write_file(dir / "model.json", serialize_model(a.model));
  json meta{{"model", a.model.name},
            {"model_hash", hex64(model_hash(a.model))},
            {"layers", a.model.layers.size()},
            {"max_tiles", a.max_tiles},
            {"core", core_to_json(a.core)},
            {"mem", json{{"eff", a.mem.eff},
                         {"ddr_port_bits", a.mem.ddr_port_bits},
                         {"clock_hz", a.mem.clock_hz}}},
            {"static_compile_seconds", a.wall_seconds}};
  write_file(dir / "meta.json", meta.dump(2) + "\n");
}

StaticArtifact load_artifact(const std::filesystem::path& dir) {
  StaticArtifact a;
  json meta;
  try {
    meta = json::parse(read_file(dir / "meta.json"));
  } catch (const json::exception& e) {
    throw Error("bad meta.json: " + std::string(e.what()));
  }
  a.model = parse_model(read_file(dir / "model.json"));
  if (meta.at("model_hash").get<std::string>() != hex64(model_hash(a.model))) {
    throw Error("model.json does not match the hash recorded in meta.json");
  }
  a.core = core_from_json(meta.at("core"));
  a.mem.eff = meta.at("mem").at("eff");
  a.mem.ddr_port_bits = meta.at("mem").at("ddr_port_bits");
  a.mem.clock_hz = meta.at("mem").at("clock_hz");
  a.max_tiles = meta.at("max_tiles");
  a.wall_seconds = meta.at("static_compile_seconds");
  a.ddr = DdrLayout::for_model(a.model);
  for (const LayerDescriptor& l : a.model.layers) {
    for (Method m : {Method::Width, Method::OutputChannel}) {
      const auto tiles = tile_layer(l, m, a.max_tiles, a.core.ocp);
      for (std::size_t t = 0; t < tiles.size(); ++t) {
        const LutKey key{l.layer_id, m, static_cast<int>(t)};
        InstructionFramePackage ifp;
        ifp.layer_id = l.layer_id;
        ifp.method = m;
        ifp.tile_index = static_cast<int>(t);
        ifp.tile = tiles[t];
        ifp.instructions = decode_stream(read_file(dir / "ifps" / ifp_name(key)));
        a.ifps.emplace(key, std::move(ifp));
      }
    }
    a.untiled.push_back(decode_stream(
        read_file(dir / "untiled" / (std::to_string(l.layer_id) + ".inst"))));
  }
  a.lut = LatencyLUT::from_csv(read_file(dir / "lut.csv"));
  return a;
}

}  // namespace fvirt
