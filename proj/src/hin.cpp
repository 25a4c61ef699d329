#include "conch/hin.hpp"

#include "conch/error.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <unordered_set>

namespace conch {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.remove_suffix(1);
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  return s;
}

Adjacency build_adjacency(std::size_t rows, std::size_t cols,
                          std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs) {
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  Adjacency adj;
  adj.rows = rows;
  adj.cols = cols;
  adj.row_ptr.assign(rows + 1, 0);
  adj.col_idx.reserve(pairs.size());
  for (const auto& [r, c] : pairs) {
    ++adj.row_ptr[r + 1];
    adj.col_idx.push_back(c);
  }
  for (std::size_t r = 0; r < rows; ++r) adj.row_ptr[r + 1] += adj.row_ptr[r];
  return adj;
}

}  // namespace

std::optional<NodeId> Hin::find_node(std::string_view name) const {
  auto it = node_lookup_.find(std::string(name));
  if (it == node_lookup_.end()) return std::nullopt;
  return it->second;
}

std::optional<TypeId> Hin::find_type(std::string_view name) const {
  for (TypeId t = 0; t < type_names_.size(); ++t) {
    if (type_names_[t] == name) return t;
  }
  return std::nullopt;
}

std::optional<RelationId> Hin::find_relation(std::string_view name) const {
  for (RelationId r = 0; r < relations_.size(); ++r) {
    if (relations_[r].name == name) return r;
  }
  return std::nullopt;
}

const Adjacency& Hin::adjacency(RelationId r, TypeId from_type) const {
  const Relation& rel = relations_.at(r);
  if (rel.src_type == from_type) return forward_.at(r);
  if (rel.dst_type == from_type) return backward_.at(r);
  throw Error("relation '" + rel.name + "' does not touch type '" + type_names_.at(from_type) + "'");
}

std::optional<ObjectIndex> Hin::find_object(std::string_view name) const {
  auto node = find_node(name);
  if (!node || node_types_[*node] != target_type_) return std::nullopt;
  return local_index_[*node];
}

// ---------------------------------------------------------------------------

NodeId HinBuilder::add_node(const std::string& name, const std::string& type) {
  if (hin_.node_lookup_.contains(name)) throw Error("duplicate node id '" + name + "'");
  auto [it, inserted] = type_lookup_.try_emplace(type, static_cast<TypeId>(hin_.type_names_.size()));
  if (inserted) {
    hin_.type_names_.push_back(type);
    hin_.nodes_by_type_.emplace_back();
  }
  const TypeId t = it->second;
  const auto id = static_cast<NodeId>(hin_.node_names_.size());
  hin_.node_names_.push_back(name);
  hin_.node_types_.push_back(t);
  hin_.local_index_.push_back(static_cast<std::uint32_t>(hin_.nodes_by_type_[t].size()));
  hin_.nodes_by_type_[t].push_back(id);
  hin_.node_lookup_.emplace(name, id);
  return id;
}

bool HinBuilder::add_edge(const std::string& relation, const std::string& src, const std::string& dst) {
  auto s = hin_.node_lookup_.find(src);
  if (s == hin_.node_lookup_.end()) throw Error("unknown node '" + src + "'");
  auto d = hin_.node_lookup_.find(dst);
  if (d == hin_.node_lookup_.end()) throw Error("unknown node '" + dst + "'");
  NodeId a = s->second;
  NodeId b = d->second;
  const TypeId ta = hin_.node_types_[a];
  const TypeId tb = hin_.node_types_[b];

  auto [it, inserted] = relation_lookup_.try_emplace(relation, static_cast<RelationId>(hin_.relations_.size()));
  if (inserted) hin_.relations_.push_back({relation, ta, tb});
  const Relation& rel = hin_.relations_[it->second];
  if (rel.src_type == ta && rel.dst_type == tb) {
    if (ta == tb && b < a) std::swap(a, b);
  } else if (rel.src_type == tb && rel.dst_type == ta) {
    std::swap(a, b);
  } else {
    throw Error("type mismatch: relation '" + relation + "' is (" + hin_.type_names_[rel.src_type] + ", " +
                hin_.type_names_[rel.dst_type] + ") but edge connects (" + hin_.type_names_[ta] + ", " +
                hin_.type_names_[tb] + ")");
  }
  Edge e{it->second, a, b};
  if (!edge_set_.try_emplace(e, 0).second) return false;
  hin_.edges_.push_back(e);
  return true;
}

void HinBuilder::declare_label(const std::string& label) {
  if (label_lookup_.try_emplace(label, static_cast<int>(hin_.label_names_.size())).second) {
    hin_.label_names_.push_back(label);
  }
}

void HinBuilder::set_label(const std::string& node, const std::string& label) {
  auto it = hin_.node_lookup_.find(node);
  if (it == hin_.node_lookup_.end()) throw Error("unknown node '" + node + "'");
  declare_label(label);
  node_labels_.emplace_back(it->second, label_lookup_.at(label));
}

void HinBuilder::set_target_type(const std::string& type) { target_type_ = type; }

void HinBuilder::set_feature_row(const std::string& node, std::vector<double> values) {
  auto it = hin_.node_lookup_.find(node);
  if (it == hin_.node_lookup_.end()) throw Error("unknown node '" + node + "'");
  feature_rows_.emplace_back(it->second, std::move(values));
}

Hin HinBuilder::build() && {
  Hin& h = hin_;
  if (target_type_ && !target_type_->empty()) {
    auto t = type_lookup_.find(*target_type_);
    if (t == type_lookup_.end()) throw Error("target type '" + *target_type_ + "' has no nodes");
    h.target_type_ = t->second;
  } else if (!node_labels_.empty()) {
    h.target_type_ = h.node_types_[node_labels_.front().first];
  } else {
    h.target_type_ = 0;
  }
  if (h.nodes_by_type_.empty()) throw Error("network has no nodes");

  const std::size_t n = h.nodes_by_type_[h.target_type_].size();
  h.labels_.assign(n, kUnlabeled);
  for (const auto& [node, label] : node_labels_) {
    if (h.node_types_[node] != h.target_type_) {
      throw Error("label on non-target node '" + h.node_names_[node] + "'");
    }
    int& slot = h.labels_[h.local_index_[node]];
    if (slot != kUnlabeled && slot != label) {
      throw Error("node '" + h.node_names_[node] + "' has more than one label");
    }
    slot = label;
  }
  if (!h.label_names_.empty() && h.label_names_.size() < 2) {
    throw Error("label set must contain at least 2 labels");
  }

  if (feature_rows_.empty()) {
    h.features_ = one_hot_fallback_features(h);
    h.has_feature_file_ = false;
  } else {
    if (feature_rows_.size() != n) {
      throw Error("feature row count " + std::to_string(feature_rows_.size()) + " != target node count " +
                  std::to_string(n));
    }
    const std::size_t dim = feature_rows_.front().second.size();
    Matrix f(n, dim);
    std::vector<bool> seen(n, false);
    for (const auto& [node, values] : feature_rows_) {
      if (h.node_types_[node] != h.target_type_) {
        throw Error("feature row for non-target node '" + h.node_names_[node] + "'");
      }
      if (values.size() != dim) {
        throw Error("feature row for '" + h.node_names_[node] + "' has " + std::to_string(values.size()) +
                    " values, expected " + std::to_string(dim));
      }
      const auto row = h.local_index_[node];
      if (seen[row]) throw Error("duplicate feature row for '" + h.node_names_[node] + "'");
      seen[row] = true;
      std::copy(values.begin(), values.end(), f.row(row).begin());
    }
    h.features_ = std::move(f);
    h.has_feature_file_ = true;
  }

  for (RelationId r = 0; r < h.relations_.size(); ++r) {
    const Relation& rel = h.relations_[r];
    std::vector<std::pair<std::uint32_t, std::uint32_t>> fwd, bwd;
    for (const Edge& e : h.edges_) {
      if (e.relation != r) continue;
      const auto ls = h.local_index_[e.src];
      const auto ld = h.local_index_[e.dst];
      fwd.emplace_back(ls, ld);
      bwd.emplace_back(ld, ls);
    }
    const std::size_t ns = h.nodes_by_type_[rel.src_type].size();
    const std::size_t nd = h.nodes_by_type_[rel.dst_type].size();
    if (rel.src_type == rel.dst_type) {
      fwd.insert(fwd.end(), bwd.begin(), bwd.end());
      h.forward_.push_back(build_adjacency(ns, nd, fwd));
      h.backward_.push_back(h.forward_.back());
    } else {
      h.forward_.push_back(build_adjacency(ns, nd, std::move(fwd)));
      h.backward_.push_back(build_adjacency(nd, ns, std::move(bwd)));
    }
  }
  return std::move(hin_);
}

// ---------------------------------------------------------------------------

void for_each_tsv_row(const std::filesystem::path& file,
                      const std::function<void(const std::vector<std::string_view>&, std::size_t)>& fn) {
  std::ifstream in(file);
  if (!in) throw Error("cannot open '" + file.string() + "'");
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string_view> fields;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = trim(line);
    if (view.empty() || view.front() == '#') continue;
    fields.clear();
    std::size_t start = 0;
    while (true) {
      const auto tab = view.find('\t', start);
      if (tab == std::string_view::npos) {
        fields.push_back(trim(view.substr(start)));
        break;
      }
      fields.push_back(trim(view.substr(start, tab - start)));
      start = tab + 1;
    }
    fn(fields, line_no);
  }
}

std::vector<double> parse_csv_doubles(std::string_view text, const std::string& file, std::size_t line) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto comma = text.find(',', start);
    if (comma == std::string_view::npos) comma = text.size();
    std::string_view tok = trim(text.substr(start, comma - start));
    double v = 0.0;
    auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (tok.empty() || res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
      throw ParseError(file, line, "malformed number '" + std::string(tok) + "'");
    }
    out.push_back(v);
    start = comma + 1;
  }
  return out;
}

namespace {

void expect_fields(const std::vector<std::string_view>& f, std::size_t n, const std::string& file,
                   std::size_t line) {
  if (f.size() != n) {
    throw ParseError(file, line, "expected " + std::to_string(n) + " tab-separated fields, got " +
                                     std::to_string(f.size()));
  }
  for (auto field : f) {
    if (field.empty()) throw ParseError(file, line, "empty field");
  }
}

}  // namespace

Hin load_hin(const HinFiles& files, const std::string& target_type) {
  HinBuilder b;
  std::unordered_map<std::string, std::string> type_of;
  const std::string nodes_name = files.nodes.string();
  for_each_tsv_row(files.nodes, [&](const auto& f, std::size_t line) {
    expect_fields(f, 2, nodes_name, line);
    try {
      b.add_node(std::string(f[0]), std::string(f[1]));
      type_of.emplace(std::string(f[0]), std::string(f[1]));
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError(nodes_name, line, e.what());
    }
  });
  const std::string edges_name = files.edges.string();
  for_each_tsv_row(files.edges, [&](const auto& f, std::size_t line) {
    expect_fields(f, 3, edges_name, line);
    try {
      b.add_edge(std::string(f[0]), std::string(f[1]), std::string(f[2]));
    } catch (const Error& e) {
      throw ParseError(edges_name, line, e.what());
    }
  });
  const std::string labels_name = files.labels.string();
  std::string target = target_type;
  for_each_tsv_row(files.labels, [&](const auto& f, std::size_t line) {
    expect_fields(f, 2, labels_name, line);
    const auto it = type_of.find(std::string(f[0]));
    if (it != type_of.end()) {
      if (target.empty()) target = it->second;
      if (it->second != target) throw ParseError(labels_name, line, "label on non-target node '" + it->first + "'");
    }
    try {
      b.set_label(std::string(f[0]), std::string(f[1]));
    } catch (const Error& e) {
      throw ParseError(labels_name, line, e.what());
    }
  });
  if (files.features) {
    const std::string feat_name = files.features->string();
    for_each_tsv_row(*files.features, [&](const auto& f, std::size_t line) {
      expect_fields(f, 2, feat_name, line);
      try {
        b.set_feature_row(std::string(f[0]), parse_csv_doubles(f[1], feat_name, line));
      } catch (const ParseError&) {
        throw;
      } catch (const Error& e) {
        throw ParseError(feat_name, line, e.what());
      }
    });
  }
  b.set_target_type(target_type);
  try {
    return std::move(b).build();
  } catch (const Error& e) {
    throw Error("invalid network (" + labels_name + "): " + e.what());
  }
}

HinFiles write_hin(const Hin& hin, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  HinFiles files{dir / "nodes.tsv", dir / "edges.tsv", dir / "labels.tsv", std::nullopt};
  {
    std::ofstream out(files.nodes);
    out << "# node_id\ttype\n";
    for (NodeId n = 0; n < hin.num_nodes(); ++n) {
      out << hin.node_name(n) << '\t' << hin.type_names()[hin.node_type(n)] << '\n';
    }
  }
  {
    std::ofstream out(files.edges);
    out << "# relation\tsrc\tdst\n";
    for (const Edge& e : hin.edges()) {
      out << hin.relations()[e.relation].name << '\t' << hin.node_name(e.src) << '\t' << hin.node_name(e.dst)
          << '\n';
    }
  }
  {
    std::ofstream out(files.labels);
    out << "# node_id\tlabel\n";
    for (ObjectIndex i = 0; i < hin.num_objects(); ++i) {
      const int label = hin.labels()[i];
      if (label == kUnlabeled) continue;
      out << hin.node_name(hin.object_node(i)) << '\t' << hin.label_names()[label] << '\n';
    }
  }
  if (hin.has_feature_file()) {
    files.features = dir / "features.tsv";
    std::ofstream out(*files.features);
    const Matrix& f = hin.features();
    for (ObjectIndex i = 0; i < hin.num_objects(); ++i) {
      out << hin.node_name(hin.object_node(i)) << '\t';
      for (std::size_t j = 0; j < f.cols(); ++j) {
        if (j) out << ',';
        out << format_double(f(i, j));
      }
      out << '\n';
    }
  }
  return files;
}

Split load_split(const std::filesystem::path& split_file, const Hin& hin) {
  Split split;
  std::unordered_set<ObjectIndex> assigned;
  const std::string name = split_file.string();
  for_each_tsv_row(split_file, [&](const auto& f, std::size_t line) {
    expect_fields(f, 2, name, line);
    auto obj = hin.find_object(f[0]);
    if (!obj) throw ParseError(name, line, "node '" + std::string(f[0]) + "' is not a target node");
    if (hin.labels()[*obj] == kUnlabeled) {
      throw ParseError(name, line, "unlabeled node '" + std::string(f[0]) + "' in split");
    }
    if (!assigned.insert(*obj).second) {
      throw ParseError(name, line, "duplicate assignment of node '" + std::string(f[0]) + "'");
    }
    if (f[1] == "train") {
      split.train.push_back(*obj);
    } else if (f[1] == "val") {
      split.validation.push_back(*obj);
    } else if (f[1] == "test") {
      split.test.push_back(*obj);
    } else {
      throw ParseError(name, line, "unknown partition '" + std::string(f[1]) + "' (expected train|val|test)");
    }
  });
  return split;
}

void write_split(const Split& split, const Hin& hin, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw Error("cannot write '" + file.string() + "'");
  out << "# node_id\tpartition\n";
  auto emit = [&](const std::vector<ObjectIndex>& part, const char* tag) {
    for (ObjectIndex i : part) out << hin.node_name(hin.object_node(i)) << '\t' << tag << '\n';
  };
  emit(split.train, "train");
  emit(split.validation, "val");
  emit(split.test, "test");
}

Matrix one_hot_fallback_features(const Hin& hin) { return Matrix::identity(hin.num_objects()); }

}  // namespace conch
