#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gcalib/graph.hpp"
#include "gcalib/kernels.hpp"

namespace gcalib {

// A calibration problem instance: graph structure, externally produced
// logits, ground-truth labels, and the train/val/test node assignment.
struct Dataset {
  Graph graph;
  Matrix logits;            // num_nodes x num_classes
  std::vector<int> labels;  // length num_nodes
  NodeMask mask;
  int num_classes = 0;
};

namespace io {

// Checks shapes, label ranges, and mask disjointness; throws BadManifest.
void validate_dataset(const Dataset& data);

// Dataset manifest: JSON with num_nodes, num_classes, seed, and paths to the
// edges/labels/logits files plus an optional split file. Relative paths are
// resolved against the manifest's directory. The split entry may be either a
// flat {train,val,test} file or a split-plan file, in which case the
// manifest's optional "split_index"/"fold" fields select an assignment.
Dataset load_manifest(const std::string& manifest_path);

std::vector<int> read_labels_file(const std::string& path, int num_nodes, int num_classes);
Matrix read_logits_file(const std::string& path, int num_nodes, int num_classes);
NodeMask read_split_file(const std::string& path, int num_nodes, int split_index = 0, int fold = 0);

void write_labels_file(const std::string& path, const std::vector<int>& labels);
void write_logits_file(const std::string& path, const Matrix& logits);
void write_split_file(const std::string& path, const NodeMask& mask);

// Writes content to a temp file in the target directory, then renames.
void write_text_atomic(const std::string& path, const std::string& content);

std::string read_text(const std::string& path);

// Exact decimal-free float encoding used for parameter serialization.
std::string double_to_hex(double v);
double hex_to_double(const std::string& s);

}  // namespace io
}  // namespace gcalib
