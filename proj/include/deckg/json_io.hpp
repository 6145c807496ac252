#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "deckg/core.hpp"

namespace deckg {

using Json = nlohmann::ordered_json;

// Unknown keys are rejected everywhere config-like JSON is read, so a typo'd
// option can never silently fall back to a default.
inline void require_known_keys(const Json& obj, std::initializer_list<const char*> known,
                               const std::string& context) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : known)
      if (it.key() == k) {
        ok = true;
        break;
      }
    if (!ok) fail_usage("unknown key '" + it.key() + "' in " + context);
  }
}

inline Json hyperparams_to_json(const Hyperparams& hp) {
  Json j;
  j["epsilon"] = hp.epsilon;
  j["mu"] = hp.mu;
  j["gamma"] = hp.gamma;
  j["dim_entity"] = hp.dim_entity;
  j["dim_relation"] = hp.dim_relation;
  j["dim_user"] = hp.dim_user;
  j["layers"] = hp.layers;
  if (hp.hop_limit) j["hop_limit"] = *hp.hop_limit;
  j["neighbor_cap"] = hp.neighbor_cap;
  j["epochs_pretrain"] = hp.epochs_pretrain;
  j["rounds_train"] = hp.rounds_train;
  j["negatives_per_positive"] = hp.negatives_per_positive;
  j["batch_size"] = hp.batch_size;
  j["activation"] = hp.activation == Activation::logistic ? "logistic" : "identity";
  j["seed"] = hp.seed;
  return j;
}

inline Hyperparams hyperparams_from_json(const Json& j, const std::string& context) {
  if (!j.is_object()) fail_usage(context + " must be a JSON object");
  require_known_keys(j,
                     {"epsilon", "mu", "gamma", "dim_entity", "dim_relation", "dim_user", "layers",
                      "hop_limit", "neighbor_cap", "epochs_pretrain", "rounds_train",
                      "negatives_per_positive", "batch_size", "activation", "seed"},
                     context);
  Hyperparams hp;
  if (j.contains("epsilon")) hp.epsilon = j["epsilon"].get<double>();
  if (j.contains("mu")) hp.mu = j["mu"].get<double>();
  if (j.contains("gamma")) hp.gamma = j["gamma"].get<double>();
  if (j.contains("dim_entity")) hp.dim_entity = j["dim_entity"].get<std::uint64_t>();
  if (j.contains("dim_relation")) hp.dim_relation = j["dim_relation"].get<std::uint64_t>();
  if (j.contains("dim_user")) hp.dim_user = j["dim_user"].get<std::uint64_t>();
  if (j.contains("layers")) hp.layers = j["layers"].get<std::uint64_t>();
  if (j.contains("hop_limit")) hp.hop_limit = j["hop_limit"].get<std::uint64_t>();
  if (j.contains("neighbor_cap")) hp.neighbor_cap = j["neighbor_cap"].get<std::uint64_t>();
  if (j.contains("epochs_pretrain")) hp.epochs_pretrain = j["epochs_pretrain"].get<std::uint64_t>();
  if (j.contains("rounds_train")) hp.rounds_train = j["rounds_train"].get<std::uint64_t>();
  if (j.contains("negatives_per_positive"))
    hp.negatives_per_positive = j["negatives_per_positive"].get<std::uint64_t>();
  if (j.contains("batch_size")) hp.batch_size = j["batch_size"].get<std::uint64_t>();
  if (j.contains("activation")) {
    const std::string a = j["activation"].get<std::string>();
    if (a == "logistic")
      hp.activation = Activation::logistic;
    else if (a == "identity")
      hp.activation = Activation::identity;
    else
      fail_usage("unknown activation '" + a + "' in " + context);
  }
  if (j.contains("seed")) hp.seed = j["seed"].get<std::uint64_t>();
  hp.validate();
  return hp;
}

}  // namespace deckg
