#include "tempograd/dataset_io.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <vector>

namespace tempograd {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  std::string tok;
  while (in >> tok) out.push_back(std::move(tok));
  return out;
}

std::string where(const std::filesystem::path& file, std::size_t line_no) {
  return file.filename().string() + ":" + std::to_string(line_no);
}

std::ifstream open_input(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ParseError("cannot open " + file.string());
  return in;
}

}  // namespace

std::string format_g9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

double parse_double(const std::string& token, const std::string& context) {
  if (token.empty()) throw ParseError(context + ": empty numeric field");
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(token.c_str(), &end);
  if (end != token.c_str() + token.size() || errno == ERANGE)
    throw ParseError(context + ": bad number '" + token + "'");
  return v;
}

long long parse_int(const std::string& token, const std::string& context) {
  if (token.empty()) throw ParseError(context + ": empty integer field");
  errno = 0;
  char* end = nullptr;
  const long long v = std::strtoll(token.c_str(), &end, 10);
  if (end != token.c_str() + token.size() || errno == ERANGE)
    throw ParseError(context + ": bad integer '" + token + "'");
  return v;
}

std::uint64_t parse_uint(const std::string& token, const std::string& context) {
  if (token.empty()) throw ParseError(context + ": empty integer field");
  errno = 0;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(token.c_str(), &end, 10);
  if (end != token.c_str() + token.size() || errno == ERANGE || token[0] == '-')
    throw ParseError(context + ": bad unsigned integer '" + token + "'");
  return static_cast<std::uint64_t>(v);
}

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  TemporalGraph& g = ds.graph;

  const auto nodes_path = dir / "nodes.tsv";
  {
    std::ifstream in = open_input(nodes_path);
    std::string line;
    std::size_t line_no = 0;

    if (!std::getline(in, line)) throw ParseError(nodes_path.string() + ": empty file");
    ++line_no;
    auto head = split_fields(line);
    if (head.size() != 4 || head[0] != "#nodes" || head[2] != "dim")
      throw ParseError(where(nodes_path, line_no) + ": expected '#nodes <N> dim <d_v>'");
    g.num_nodes = static_cast<int>(parse_int(head[1], where(nodes_path, line_no)));
    g.node_dim = static_cast<int>(parse_int(head[3], where(nodes_path, line_no)));
    if (g.num_nodes < 0 || g.node_dim < 0)
      throw ParseError(where(nodes_path, line_no) + ": negative count");

    g.node_features.assign(
        static_cast<std::size_t>(g.num_nodes) * static_cast<std::size_t>(g.node_dim), 0.0);
    g.labels.assign(static_cast<std::size_t>(g.num_nodes), -1);
    g.splits.assign(static_cast<std::size_t>(g.num_nodes), Split::bg);
    std::vector<char> seen(static_cast<std::size_t>(g.num_nodes), 0);

    int rows = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      auto fields = split_fields(line);
      if (fields.empty()) continue;
      if (fields[0] == "#meta") {
        if (fields.size() != 3) throw ParseError(where(nodes_path, line_no) + ": expected '#meta <name> <seed>'");
        ds.name = fields[1];
        ds.seed = parse_uint(fields[2], where(nodes_path, line_no));
        continue;
      }
      const std::string ctx = where(nodes_path, line_no);
      if (fields.size() != 3 + static_cast<std::size_t>(g.node_dim))
        throw ParseError(ctx + ": expected id, label, split and " + std::to_string(g.node_dim) +
                         " features");
      const long long id = parse_int(fields[0], ctx);
      if (id < 0 || id >= g.num_nodes) throw ParseError(ctx + ": node id out of range");
      if (seen[static_cast<std::size_t>(id)]) throw ParseError(ctx + ": duplicate node id");
      seen[static_cast<std::size_t>(id)] = 1;
      const long long label = parse_int(fields[1], ctx);
      if (label < -1 || label > 1) throw ParseError(ctx + ": label must be -1, 0 or 1");
      g.labels[static_cast<std::size_t>(id)] = static_cast<int>(label);
      try {
        g.splits[static_cast<std::size_t>(id)] = split_from_string(fields[2]);
      } catch (const ParseError& e) {
        throw ParseError(ctx + ": " + e.what());
      }
      for (int j = 0; j < g.node_dim; ++j) {
        g.node_features[static_cast<std::size_t>(id) * static_cast<std::size_t>(g.node_dim) +
                        static_cast<std::size_t>(j)] =
            parse_double(fields[3 + static_cast<std::size_t>(j)], ctx);
      }
      ++rows;
    }
    if (rows != g.num_nodes)
      throw ParseError(nodes_path.string() + ": header promised " + std::to_string(g.num_nodes) +
                       " nodes, found " + std::to_string(rows));
  }

  const auto edges_path = dir / "edges.tsv";
  {
    std::ifstream in = open_input(edges_path);
    std::string line;
    std::size_t line_no = 0;

    if (!std::getline(in, line)) throw ParseError(edges_path.string() + ": empty file");
    ++line_no;
    auto head = split_fields(line);
    if (head.size() != 4 || head[0] != "#edges" || head[2] != "dim")
      throw ParseError(where(edges_path, line_no) + ": expected '#edges <M> dim <d_e>'");
    const long long m = parse_int(head[1], where(edges_path, line_no));
    g.edge_dim = static_cast<int>(parse_int(head[3], where(edges_path, line_no)));
    if (m < 0 || g.edge_dim < 0) throw ParseError(where(edges_path, line_no) + ": negative count");

    g.edges.reserve(static_cast<std::size_t>(m));
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      auto fields = split_fields(line);
      if (fields.empty()) continue;
      const std::string ctx = where(edges_path, line_no);
      if (fields.size() != 3 + static_cast<std::size_t>(g.edge_dim))
        throw ParseError(ctx + ": expected src, dst, t and " + std::to_string(g.edge_dim) +
                         " features");
      EdgeEvent ev;
      ev.src = static_cast<int>(parse_int(fields[0], ctx));
      ev.dst = static_cast<int>(parse_int(fields[1], ctx));
      ev.t = parse_double(fields[2], ctx);
      if (ev.src < 0 || ev.src >= g.num_nodes || ev.dst < 0 || ev.dst >= g.num_nodes)
        throw ParseError(ctx + ": endpoint out of range");
      if (!g.edges.empty() && ev.t < g.edges.back().t)
        throw ParseError(ctx + ": events must be sorted by timestamp");
      ev.features.resize(static_cast<std::size_t>(g.edge_dim));
      for (int j = 0; j < g.edge_dim; ++j)
        ev.features[static_cast<std::size_t>(j)] =
            parse_double(fields[3 + static_cast<std::size_t>(j)], ctx);
      g.edges.push_back(std::move(ev));
    }
    if (static_cast<long long>(g.edges.size()) != m)
      throw ParseError(edges_path.string() + ": header promised " + std::to_string(m) +
                       " edges, found " + std::to_string(g.edges.size()));
  }

  g.validate();
  return ds;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  const TemporalGraph& g = dataset.graph;
  g.validate();
  std::filesystem::create_directories(dir);

  {
    std::ofstream out(dir / "nodes.tsv");
    if (!out) throw ParseError("cannot write " + (dir / "nodes.tsv").string());
    out << "#nodes " << g.num_nodes << " dim " << g.node_dim << "\n";
    if (!dataset.name.empty()) {
      if (dataset.name.find_first_of(" \t\n") != std::string::npos)
        throw ContractError("dataset name must not contain whitespace");
      out << "#meta " << dataset.name << " " << dataset.seed << "\n";
    }
    for (int i = 0; i < g.num_nodes; ++i) {
      out << i << '\t' << g.labels[static_cast<std::size_t>(i)] << '\t'
          << split_to_string(g.splits[static_cast<std::size_t>(i)]);
      const double* row = g.node_row(i);
      for (int j = 0; j < g.node_dim; ++j) out << '\t' << format_g9(row[j]);
      out << '\n';
    }
  }
  {
    std::ofstream out(dir / "edges.tsv");
    if (!out) throw ParseError("cannot write " + (dir / "edges.tsv").string());
    out << "#edges " << g.edges.size() << " dim " << g.edge_dim << "\n";
    for (const EdgeEvent& ev : g.edges) {
      out << ev.src << '\t' << ev.dst << '\t' << format_g9(ev.t);
      for (double f : ev.features) out << '\t' << format_g9(f);
      out << '\n';
    }
  }
}

}  // namespace tempograd
