#include <cstdio>

#include <nlohmann/json.hpp>

#include "hcd/binary.hpp"
#include "hcd/error.hpp"
#include "hcd/forest.hpp"
#include "hcd/pipeline_io.hpp"

namespace hcd {

using nlohmann::json;

namespace {

void encode_node(const Tree& t, std::int32_t n, binary::Writer& w) {
  const auto& node = t.nodes[n];
  if (node.is_leaf()) {
    w.u8(0);
    w.f64(node.value);
    return;
  }
  w.u8(1);
  w.u32(static_cast<std::uint32_t>(node.feature));
  w.f64(node.threshold);
  encode_node(t, node.left, w);
  encode_node(t, node.right, w);
}

std::int32_t decode_node(binary::Reader& r, Tree& t, std::uint32_t budget, std::size_t dim,
                         int depth) {
  if (t.nodes.size() >= budget) r.fail("tree has more nodes than its declared count");
  if (depth > 64) r.fail("tree nesting too deep");
  const auto idx = static_cast<std::int32_t>(t.nodes.size());
  t.nodes.push_back({});
  const auto kind = r.u8("node kind");
  if (kind == 0) {
    t.nodes[idx].value = r.f64("leaf value");
    return idx;
  }
  if (kind != 1) r.fail("unknown node kind " + std::to_string(kind));
  const auto feature = r.u32("split feature");
  if (feature >= dim) r.fail("split feature index out of range");
  t.nodes[idx].feature = static_cast<std::int32_t>(feature);
  t.nodes[idx].threshold = r.f64("split threshold");
  const auto l = decode_node(r, t, budget, dim, depth + 1);
  t.nodes[idx].left = l;
  const auto rr = decode_node(r, t, budget, dim, depth + 1);
  t.nodes[idx].right = rr;
  return idx;
}

json node_to_json(const Tree& t, std::int32_t n) {
  const auto& node = t.nodes[n];
  if (node.is_leaf()) return {{"leaf", node.value}};
  return {{"feature", node.feature},
          {"threshold", node.threshold},
          {"left", node_to_json(t, node.left)},
          {"right", node_to_json(t, node.right)}};
}

std::int32_t node_from_json(const json& j, Tree& t, std::size_t dim, int depth) {
  if (depth > 64) throw ParseError("forest JSON: tree nesting too deep", 0);
  const auto idx = static_cast<std::int32_t>(t.nodes.size());
  t.nodes.push_back({});
  if (j.contains("leaf")) {
    t.nodes[idx].value = j.at("leaf").get<double>();
    return idx;
  }
  const auto f = j.at("feature").get<std::int64_t>();
  if (f < 0 || static_cast<std::size_t>(f) >= dim)
    throw ParseError("forest JSON: split feature out of range", 0);
  t.nodes[idx].feature = static_cast<std::int32_t>(f);
  t.nodes[idx].threshold = j.at("threshold").get<double>();
  const auto l = node_from_json(j.at("left"), t, dim, depth + 1);
  t.nodes[idx].left = l;
  const auto r = node_from_json(j.at("right"), t, dim, depth + 1);
  t.nodes[idx].right = r;
  return idx;
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

std::vector<char> encode_forest(const Forest& forest) {
  binary::Writer w;
  w.bytes("HCDF", 4);
  w.u32(kForestVersion);
  w.u32(static_cast<std::uint32_t>(forest.feature_dim));
  w.u8(static_cast<std::uint8_t>(forest.stage0_transform));
  w.f64(forest.stage0_weight);
  w.u64(forest.config_hash);
  w.u32(static_cast<std::uint32_t>(forest.trees.size()));
  for (const auto& t : forest.trees) {
    w.u32(static_cast<std::uint32_t>(t.nodes.size()));
    encode_node(t, 0, w);
  }
  return std::move(w.buffer());
}

Forest decode_forest(const std::vector<char>& bytes) {
  binary::Reader r(bytes, "forest file");
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::string(magic, 4) != "HCDF") throw ParseError("forest file: bad magic", 0);
  const auto version = r.u32("version");
  if (version != kForestVersion)
    throw ParseError("forest file: unsupported version " + std::to_string(version), 4);
  Forest f;
  f.feature_dim = r.u32("feature_dim");
  const auto t = r.u8("stage0 transform");
  if (t > 2) r.fail("unknown stage-0 transform " + std::to_string(t));
  f.stage0_transform = static_cast<Stage0Transform>(t);
  f.stage0_weight = r.f64("stage0 weight");
  f.config_hash = r.u64("config hash");
  const auto count = r.u32("tree count");
  f.trees.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto nodes = r.u32("node count");
    if (nodes == 0) r.fail("empty tree");
    Tree tree;
    tree.nodes.reserve(nodes);
    decode_node(r, tree, nodes, f.feature_dim, 0);
    if (tree.nodes.size() != nodes) r.fail("tree node count does not match its records");
    f.trees.push_back(std::move(tree));
  }
  if (r.remaining() != 0) r.fail("trailing bytes after the last tree");
  return f;
}

void save_forest(const Forest& forest, const std::filesystem::path& path) {
  write_file_atomic(path, encode_forest(forest));
}

Forest load_forest(const std::filesystem::path& path) {
  try {
    return decode_forest(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.offset());
  }
}

std::string forest_to_json(const Forest& forest) {
  json trees = json::array();
  for (const auto& t : forest.trees) trees.push_back(node_to_json(t, 0));
  json j = {{"format", "hcd-forest"},
            {"version", kForestVersion},
            {"feature_dim", forest.feature_dim},
            {"stage0", {{"transform", to_string(forest.stage0_transform)},
                        {"weight", forest.stage0_weight}}},
            {"config_hash", hash_hex(forest.config_hash)},
            {"trees", std::move(trees)}};
  return j.dump(1);
}

Forest forest_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    if (j.at("format").get<std::string>() != "hcd-forest")
      throw ParseError("forest JSON: wrong format tag", 0);
    Forest f;
    f.feature_dim = j.at("feature_dim").get<std::size_t>();
    f.stage0_transform = stage0_from_string(j.at("stage0").at("transform").get<std::string>());
    f.stage0_weight = j.at("stage0").at("weight").get<double>();
    f.config_hash = std::stoull(j.at("config_hash").get<std::string>(), nullptr, 16);
    for (const auto& t : j.at("trees")) {
      Tree tree;
      node_from_json(t, tree, f.feature_dim, 0);
      f.trees.push_back(std::move(tree));
    }
    return f;
  } catch (const json::exception& e) {
    throw ParseError(std::string("forest JSON: ") + e.what(), 0);
  }
}

}  // namespace hcd
