#pragma once

#include <filesystem>
#include <string>

#include "tempograd/temporal_graph.hpp"

namespace tempograd {

// %.9g with the C locale; shortest text that survives a parse round trip for
// values the generator emits (they are quantized through this same format).
std::string format_g9(double v);

// Parses a double the way format_g9 writes it. Throws ParseError on trailing
// garbage or non-numeric input.
double parse_double(const std::string& token, const std::string& context);

long long parse_int(const std::string& token, const std::string& context);

// Full-range unsigned parse, for seeds.
std::uint64_t parse_uint(const std::string& token, const std::string& context);

// A dataset is a directory holding nodes.tsv and edges.tsv.
//
// nodes.tsv:  "#nodes <N> dim <d_v>", optional "#meta <name> <seed>", then one
//             line per node: id, label (-1|0|1), split, d_v features.
// edges.tsv:  "#edges <M> dim <d_e>", then one line per event sorted by
//             timestamp: src, dst, t, d_e features.
Dataset load_dataset(const std::filesystem::path& dir);
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);

}  // namespace tempograd
