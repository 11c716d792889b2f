#include "gcalib/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "gcalib/errors.hpp"

namespace fs = std::filesystem;

namespace gcalib::io {

namespace {

void check_sorted_disjoint(const NodeMask& mask, int num_nodes) {
  std::vector<char> seen(num_nodes, 0);
  for (const auto* part : {&mask.train, &mask.val, &mask.test}) {
    for (int i : *part) {
      if (i < 0 || i >= num_nodes) throw BadManifest("split node id out of range: " + std::to_string(i));
      if (seen[i]) throw BadManifest("split sets overlap at node " + std::to_string(i));
      seen[i] = 1;
    }
  }
}

}  // namespace

void validate_dataset(const Dataset& data) {
  const int n = data.graph.num_nodes;
  if (data.logits.rows != n || data.logits.cols != data.num_classes) {
    throw BadManifest("logits shape does not match num_nodes x num_classes");
  }
  if (static_cast<int>(data.labels.size()) != n) {
    throw BadManifest("labels length does not match num_nodes");
  }
  for (int i = 0; i < n; ++i) {
    if (data.labels[i] < 0 || data.labels[i] >= data.num_classes) {
      throw BadManifest("label out of range at node " + std::to_string(i));
    }
  }
  check_sorted_disjoint(data.mask, n);
}

std::vector<int> read_labels_file(const std::string& path, int num_nodes, int num_classes) {
  std::ifstream in(path);
  if (!in) throw BadManifest("cannot open labels file: " + path);
  std::vector<int> labels(num_nodes, -1);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    long long node, cls;
    if (!(ls >> node >> cls)) throw BadManifest(path + ":" + std::to_string(lineno) + ": expected node_id and class_id");
    if (node < 0 || node >= num_nodes) throw BadManifest(path + ":" + std::to_string(lineno) + ": node id out of range");
    if (cls < 0 || cls >= num_classes) throw BadManifest(path + ":" + std::to_string(lineno) + ": class id out of range");
    if (labels[node] != -1) throw BadManifest(path + ":" + std::to_string(lineno) + ": duplicate node id");
    labels[node] = static_cast<int>(cls);
  }
  for (int i = 0; i < num_nodes; ++i) {
    if (labels[i] == -1) throw BadManifest(path + ": missing label for node " + std::to_string(i));
  }
  return labels;
}

Matrix read_logits_file(const std::string& path, int num_nodes, int num_classes) {
  std::ifstream in(path);
  if (!in) throw BadManifest("cannot open logits file: " + path);
  Matrix logits(num_nodes, num_classes);
  std::vector<char> seen(num_nodes, 0);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    long long node;
    if (!(ls >> node)) throw BadManifest(path + ":" + std::to_string(lineno) + ": expected node id");
    if (node < 0 || node >= num_nodes) throw BadManifest(path + ":" + std::to_string(lineno) + ": node id out of range");
    if (seen[node]) throw BadManifest(path + ":" + std::to_string(lineno) + ": duplicate node id");
    seen[node] = 1;
    for (int k = 0; k < num_classes; ++k) {
      double v;
      if (!(ls >> v)) {
        throw BadManifest(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(num_classes) +
                          " logit values");
      }
      logits(static_cast<int>(node), k) = v;
    }
  }
  for (int i = 0; i < num_nodes; ++i) {
    if (!seen[i]) throw BadManifest(path + ": missing logits for node " + std::to_string(i));
  }
  return logits;
}

NodeMask read_split_file(const std::string& path, int num_nodes, int split_index, int fold) {
  std::ifstream in(path);
  if (!in) throw BadManifest("cannot open split file: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(buffer.str());
  } catch (const nlohmann::json::exception& e) {
    throw BadManifest(path + ": invalid JSON: " + e.what());
  }
  NodeMask mask;
  try {
    if (j.contains("assignments")) {
      (void)split_index;  // plan files hold a single split; folds select within it
      const auto& assignments = j.at("assignments");
      if (fold < 0 || fold >= static_cast<int>(assignments.size())) {
        throw BadManifest(path + ": split plan has no fold " + std::to_string(fold));
      }
      mask.train = assignments.at(fold).at("train").get<std::vector<int>>();
      mask.val = assignments.at(fold).at("val").get<std::vector<int>>();
      mask.test = assignments.at(fold).at("test").get<std::vector<int>>();
    } else {
      mask.train = j.at("train").get<std::vector<int>>();
      mask.val = j.at("val").get<std::vector<int>>();
      mask.test = j.at("test").get<std::vector<int>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw BadManifest(path + ": " + e.what());
  }
  for (auto* part : {&mask.train, &mask.val, &mask.test}) std::sort(part->begin(), part->end());
  check_sorted_disjoint(mask, num_nodes);
  return mask;
}

Dataset load_manifest(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw BadManifest("cannot open manifest: " + manifest_path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(buffer.str());
  } catch (const nlohmann::json::exception& e) {
    throw BadManifest(manifest_path + ": invalid JSON: " + e.what());
  }

  const fs::path base = fs::path(manifest_path).parent_path();
  const auto resolve = [&base](const std::string& p) {
    fs::path fp(p);
    return fp.is_absolute() ? fp.string() : (base / fp).string();
  };

  Dataset data;
  try {
    const int num_nodes = j.at("num_nodes").get<int>();
    data.num_classes = j.at("num_classes").get<int>();
    if (num_nodes <= 0 || data.num_classes <= 0) throw BadManifest(manifest_path + ": counts must be positive");
    data.graph = graph_core::read_edge_file(resolve(j.at("edges").get<std::string>()), num_nodes);
    data.labels = read_labels_file(resolve(j.at("labels").get<std::string>()), num_nodes, data.num_classes);
    data.logits = read_logits_file(resolve(j.at("logits").get<std::string>()), num_nodes, data.num_classes);
    if (j.contains("split")) {
      const int split_index = j.value("split_index", 0);
      const int fold = j.value("fold", 0);
      data.mask = read_split_file(resolve(j.at("split").get<std::string>()), num_nodes, split_index, fold);
    }
  } catch (const nlohmann::json::exception& e) {
    throw BadManifest(manifest_path + ": " + e.what());
  }
  validate_dataset(data);
  return data;
}

void write_labels_file(const std::string& path, const std::vector<int>& labels) {
  std::string out = "# node_id<TAB>class_id\n";
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out += std::to_string(i) + "\t" + std::to_string(labels[i]) + "\n";
  }
  write_text_atomic(path, out);
}

void write_logits_file(const std::string& path, const Matrix& logits) {
  std::string out;
  out.reserve(static_cast<std::size_t>(logits.rows) * logits.cols * 24);
  char buf[64];
  for (int i = 0; i < logits.rows; ++i) {
    out += std::to_string(i);
    for (int k = 0; k < logits.cols; ++k) {
      std::snprintf(buf, sizeof(buf), " %.17g", logits(i, k));
      out += buf;
    }
    out += "\n";
  }
  write_text_atomic(path, out);
}

void write_split_file(const std::string& path, const NodeMask& mask) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["train"] = mask.train;
  j["val"] = mask.val;
  j["test"] = mask.test;
  write_text_atomic(path, j.dump(2) + "\n");
}

void write_text_atomic(const std::string& path, const std::string& content) {
  const fs::path target(path);
  const fs::path tmp = target.parent_path() / (target.filename().string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw BadManifest("cannot write file: " + tmp.string());
    out << content;
    if (!out) throw BadManifest("short write to " + tmp.string());
  }
  fs::rename(tmp, target);
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw BadManifest("cannot open file: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::string double_to_hex(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

double hex_to_double(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str()) throw BadManifest("invalid hex float: " + s);
  return v;
}

}  // namespace gcalib::io
