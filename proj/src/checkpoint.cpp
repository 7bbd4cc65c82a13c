#include "tempograd/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace tempograd {

namespace {

void check_token(const std::string& s, const char* what) {
  if (s.empty() || s.find_first_of(" \t\n") != std::string::npos)
    throw ContractError(std::string("checkpoint ") + what + " must be a non-empty single token");
}

}  // namespace

void save_checkpoint(const std::filesystem::path& file, const std::string& config_line,
                     const std::vector<std::pair<std::string, Var>>& params) {
  if (config_line.find('\n') != std::string::npos)
    throw ContractError("checkpoint config line must not contain newlines");
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw ParseError("cannot write " + file.string());
  out << kCheckpointMagic << "\n";
  out << "config " << config_line << "\n";
  for (const auto& [name, var] : params) {
    check_token(name, "tensor name");
    if (!var.defined()) throw ContractError("checkpoint: undefined parameter '" + name + "'");
    const Tensor& t = var.value();
    out << "tensor " << name << " " << t.ndim();
    for (int a = 0; a < t.ndim(); ++a) out << " " << t.dim(a);
    out << " " << t.size() * sizeof(double) << "\n";
    // Payload is host byte order; the engine targets little-endian machines.
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!out) throw ParseError("write failed for " + file.string());
}

CheckpointData load_checkpoint(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ParseError("cannot open " + file.string());
  std::string line;
  if (!std::getline(in, line) || line != kCheckpointMagic)
    throw ParseError(file.string() + ": bad checkpoint magic");

  CheckpointData data;
  if (!std::getline(in, line) || line.rfind("config ", 0) != 0)
    throw ParseError(file.string() + ": missing config line");
  data.config_line = line.substr(7);

  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream rec(line);
    std::string tag, name;
    int ndim = 0;
    if (!(rec >> tag >> name >> ndim) || tag != "tensor" || ndim < 1 || ndim > 2)
      throw ParseError(file.string() + ": bad tensor record '" + line + "'");
    std::vector<int> shape(static_cast<std::size_t>(ndim));
    for (int a = 0; a < ndim; ++a) {
      if (!(rec >> shape[static_cast<std::size_t>(a)]) || shape[static_cast<std::size_t>(a)] < 0)
        throw ParseError(file.string() + ": bad dims in '" + line + "'");
    }
    std::size_t nbytes = 0;
    std::string trailing;
    if (!(rec >> nbytes) || (rec >> trailing))
      throw ParseError(file.string() + ": bad byte count in '" + line + "'");
    Tensor t(shape);
    if (nbytes != t.size() * sizeof(double))
      throw ParseError(file.string() + ": byte count does not match shape in '" + line + "'");
    in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(nbytes));
    if (static_cast<std::size_t>(in.gcount()) != nbytes)
      throw ParseError(file.string() + ": truncated payload for tensor '" + name + "'");
    data.tensors.emplace_back(name, std::move(t));
  }
  return data;
}

void restore_parameters(const CheckpointData& data,
                        const std::vector<std::pair<std::string, Var>>& params) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : data.tensors) {
    if (!by_name.emplace(name, &t).second)
      throw ParseError("checkpoint holds tensor '" + name + "' twice");
  }
  if (by_name.size() != params.size())
    throw ParseError("checkpoint holds " + std::to_string(by_name.size()) +
                     " tensors, model expects " + std::to_string(params.size()));
  for (const auto& [name, var] : params) {
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw ParseError("checkpoint is missing tensor '" + name + "'");
    if (!var.defined()) throw ContractError("restore: undefined parameter '" + name + "'");
    if (it->second->shape() != var.value().shape())
      throw ParseError("checkpoint tensor '" + name + "' has shape " + it->second->shape_str() +
                       ", model expects " + var.value().shape_str());
    var.mutable_value() = *it->second;
  }
}

}  // namespace tempograd
