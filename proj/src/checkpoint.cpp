#include "dgstmtl/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include <json.hpp>

namespace dgstmtl {
namespace {

constexpr char kMagic[8] = {'D', 'G', 'C', 'K', 'P', 'T', '0', '1'};

using nlohmann::json;

json dims_to_json(const Dims& d) {
  return json{{"n", d.n},       {"t", d.t}, {"k", d.k},         {"c", d.c},
              {"c_prime", d.c_prime}, {"m", d.m}, {"d", d.d}};
}

Dims dims_from_json(const json& j) {
  Dims d;
  d.n = j.at("n");
  d.t = j.at("t");
  d.k = j.at("k");
  d.c = j.at("c");
  d.c_prime = j.at("c_prime");
  d.m = j.at("m");
  d.d = j.at("d");
  return d;
}

json config_to_json(const TrainConfig& c) {
  return json{{"batch_size", c.batch_size},
              {"learning_rate", c.learning_rate},
              {"hidden_dim", c.hidden_dim},
              {"gcn_layers", c.gcn_layers},
              {"max_epochs", c.max_epochs},
              {"patience", c.patience},
              {"seed", c.seed},
              {"prior_layout", layout_name(c.prior_layout)},
              {"variant", variant_name(c.variant)},
              {"history", c.history},
              {"ctke_dim", c.ctke_dim},
              {"corr_threshold", c.corr_threshold},
              {"corr_mode", correlation_mode_name(c.corr_mode)},
              {"gate_l1", c.gate_l1}};
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  c.batch_size = j.at("batch_size");
  c.learning_rate = j.at("learning_rate");
  c.hidden_dim = j.at("hidden_dim");
  c.gcn_layers = j.at("gcn_layers");
  c.max_epochs = j.at("max_epochs");
  c.patience = j.at("patience");
  c.seed = j.at("seed");
  c.prior_layout = layout_from_name(j.at("prior_layout"));
  c.variant = variant_from_name(j.at("variant"));
  c.history = j.at("history");
  c.ctke_dim = j.at("ctke_dim");
  c.corr_threshold = j.at("corr_threshold");
  c.corr_mode = correlation_mode_from_name(j.at("corr_mode"));
  c.gate_l1 = j.at("gate_l1");
  return c;
}

}  // namespace

void save_checkpoint(const Model& model, const std::string& path) {
  json header;
  header["format"] = "dgstmtl.checkpoint";
  header["version"] = 1;
  header["dims"] = dims_to_json(model.dims);
  header["train_config"] = config_to_json(model.cfg);
  header["loss_config"] = json{{"beta", model.loss_cfg.beta},
                               {"alpha", model.loss_cfg.alpha},
                               {"delta", model.loss_cfg.delta}};
  header["task_names"] = model.task_names;
  json scalers = json::array();
  for (const auto& s : model.scalers)
    scalers.push_back(json{{"mean", s.mean},
                           {"std_dev", s.std_dev},
                           {"fallback", s.fallback}});
  header["scalers"] = scalers;
  header["prior_layout"] = layout_name(model.prior.layout);

  auto entries = model.params.named();
  entries.emplace_back("prior.a_p", model.prior.a_p);
  json tensors = json::array();
  for (const auto& [name, t] : entries)
    tensors.push_back(json{{"name", name}, {"shape", t.shape()}});
  header["tensors"] = tensors;

  const std::string header_str = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint '" + path + "'");
  out.write(kMagic, sizeof kMagic);
  const std::uint64_t len = header_str.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(header_str.data(), std::streamsize(header_str.size()));
  for (const auto& [name, t] : entries) {
    const auto v = t.values();
    out.write(reinterpret_cast<const char*>(v.data()),
              std::streamsize(v.size() * sizeof(double)));
  }
  if (!out) throw DataError("failed writing checkpoint '" + path + "'");
}

Model load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path + "'");
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw DataError("'" + path + "' is not a dgstmtl checkpoint");
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  std::string header_str(len, '\0');
  in.read(header_str.data(), std::streamsize(len));
  if (!in) throw DataError("truncated checkpoint header in '" + path + "'");

  json header;
  try {
    header = json::parse(header_str);
  } catch (const json::exception& e) {
    throw DataError("bad checkpoint header in '" + path + "': " + e.what());
  }
  if (header.value("format", "") != "dgstmtl.checkpoint")
    throw DataError("'" + path + "' has an unknown container format");

  Model model;
  model.dims = dims_from_json(header.at("dims"));
  model.cfg = config_from_json(header.at("train_config"));
  model.loss_cfg.beta = header.at("loss_config").at("beta").get<std::vector<double>>();
  model.loss_cfg.alpha =
      header.at("loss_config").at("alpha").get<std::vector<double>>();
  model.loss_cfg.delta =
      header.at("loss_config").at("delta").get<std::vector<double>>();
  model.task_names = header.at("task_names").get<std::vector<std::string>>();
  for (const auto& s : header.at("scalers")) {
    Scaler sc;
    sc.mean = s.at("mean");
    sc.std_dev = s.at("std_dev");
    sc.fallback = s.at("fallback");
    model.scalers.push_back(sc);
  }

  // Rebuild the parameter structure from the stored config, then overwrite
  // every tensor with the stored bytes.
  Rng rng(derive_seed(model.cfg.seed, SeedStream::param_init));
  model.params = init_model_params(model.dims, model.cfg, rng);
  model.prior.layout = layout_from_name(header.at("prior_layout"));
  model.prior.n = model.dims.n;
  model.prior.m = model.dims.m;
  model.prior.a_p =
      Tensor::zeros({model.dims.block_rows(), model.dims.block_rows()});

  std::map<std::string, Tensor> by_name;
  for (auto& [name, t] : model.params.named()) by_name.emplace(name, t);
  by_name.emplace("prior.a_p", model.prior.a_p);

  for (const auto& entry : header.at("tensors")) {
    const std::string name = entry.at("name");
    const Shape shape = entry.at("shape").get<Shape>();
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw DataError("checkpoint '" + path + "' holds unknown tensor '" + name +
                      "'");
    if (it->second.shape() != shape)
      throw DataError("checkpoint tensor '" + name + "' has shape " +
                      shape_str(shape) + ", model expects " +
                      shape_str(it->second.shape()));
    auto dst = it->second.values_mut();
    in.read(reinterpret_cast<char*>(dst.data()),
            std::streamsize(dst.size() * sizeof(double)));
    if (!in) throw DataError("truncated tensor data in '" + path + "'");
    by_name.erase(it);
  }
  if (!by_name.empty())
    throw DataError("checkpoint '" + path + "' is missing tensor '" +
                    by_name.begin()->first + "'");
  return model;
}

}  // namespace dgstmtl
