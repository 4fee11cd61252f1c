#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "natgrad/model.hpp"

namespace natgrad {

std::string checkpoint_to_string(const Mlp& m) {
  std::string out = "NGMLP 1\n";
  const Architecture& a = m.architecture();
  for (std::size_t k = 0; k < a.dims.size(); ++k) out += (k ? " " : "") + std::to_string(a.dims[k]);
  out += '\n';
  for (std::size_t k = 0; k < a.acts.size(); ++k) out += (k ? " " : "") + to_string(a.acts[k]);
  out += '\n';
  char buf[32];
  for (std::size_t i = 0; i < m.param_count(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", m.params()[i]);
    out += buf;
    out += (i + 1 == m.param_count()) ? '\n' : ' ';
  }
  return out;
}

Mlp checkpoint_from_string(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "NGMLP 1")
    throw ConfigError("checkpoint: missing 'NGMLP 1' header");
  Architecture arch;
  if (!std::getline(in, line)) throw ConfigError("checkpoint: missing dims line");
  {
    std::istringstream ls(line);
    std::size_t d;
    while (ls >> d) arch.dims.push_back(d);
  }
  if (!std::getline(in, line)) throw ConfigError("checkpoint: missing activations line");
  {
    std::istringstream ls(line);
    std::string name;
    while (ls >> name) arch.acts.push_back(parse_activation(name));
  }
  arch.validate();
  std::vector<double> p;
  p.reserve(arch.param_count());
  std::string tok;
  while (in >> tok) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != tok.size()) throw ConfigError("checkpoint: bad number '" + tok + "'");
    p.push_back(v);
  }
  if (p.size() != arch.param_count())
    throw ConfigError("checkpoint: expected " + std::to_string(arch.param_count()) +
                      " parameters, found " + std::to_string(p.size()));
  return Mlp(arch, ParamVector(std::move(p)));
}

void save_checkpoint(const Mlp& m, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write checkpoint '" + path + "'");
  f << checkpoint_to_string(m);
}

Mlp load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot read checkpoint '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return checkpoint_from_string(ss.str());
}

}  // namespace natgrad
