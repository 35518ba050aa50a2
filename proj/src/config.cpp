#include <fstream>

#include "json.hpp"
#include "mfnet/trainer.hpp"

namespace mfnet {

using nlohmann::json;

ArchFamily arch_family(ArchId arch) {
    switch (arch) {
        case ArchId::vgg16:
        case ArchId::resnet_v1: return ArchFamily::vgg_resnet;
        case ArchId::inception_v4:
        case ArchId::inception_resnet_v2: return ArchFamily::inception;
    }
    throw ArgumentError("unknown architecture id");
}

namespace {

FreezePolicy freeze_from_json(const json& j) {
    FreezePolicy p;
    if (j.is_string()) {
        p.variant = freeze_variant_from_string(j.get<std::string>());
    } else if (j.is_object()) {
        p.variant = freeze_variant_from_string(j.value("variant", "none_frozen"));
        if (j.contains("prefixes")) p.freeze_prefixes = j["prefixes"].get<std::vector<std::string>>();
    } else {
        throw ValidationError("freeze must be a variant string or an object");
    }
    return p;
}

}  // namespace

ExperimentConfig config_from_json_text(const std::string& text) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw ValidationError("experiment config is not valid JSON");

    ExperimentConfig cfg;
    try {
        cfg.name = j.value("name", std::string("run"));
        cfg.network = arch_from_string(j.at("network").get<std::string>());
        cfg.batch_size = j.value("batch_size", 32);
        cfg.load_weights = j.value("load_weights", false);
        cfg.weights_path = j.value("weights_path", std::string());
        if (j.contains("freeze")) cfg.freeze = freeze_from_json(j["freeze"]);
        cfg.dropout_keep = j.value("dropout_keep", 1.0);
        cfg.start_lr = j.value("start_lr", 1e-4);
        if (j.contains("decay_step") && j["decay_step"].is_string()) {
            // the table writes "No" for runs without decay
            cfg.decay_step = 0;
        } else {
            cfg.decay_step = j.value("decay_step", int64_t{0});
        }
        cfg.decay_rate = j.value("decay_rate", 1.0);
        cfg.batch_norm = j.value("batch_norm", true);
        cfg.num_aug = j.value("num_aug", arch_family(cfg.network) == ArchFamily::vgg_resnet ? 3 : 4);
        cfg.optimizer = optimizer_from_string(j.value("optimizer", std::string("adam")));
        cfg.epochs = j.value("epochs", 1);
        cfg.seed = j.value("seed", uint64_t{0});
        if (j.contains("scale")) {
            const json& s = j["scale"];
            cfg.scale.input_side = s.value("input_side", 32);
            cfg.scale.width_multiplier = s.value("width_multiplier", 0.125);
            cfg.scale.blocks_per_stage = s.value("blocks_per_stage", 1);
        }
        if (j.contains("data")) {
            const json& d = j["data"];
            cfg.data.manifest = d.value("manifest", std::string());
            cfg.data.split = d.value("split", std::string());
            cfg.data.split_seed = d.value("split_seed", uint64_t{0});
            cfg.data.images_root = d.value("images_root", std::string());
            cfg.data.rebalance_cap = d.value("rebalance_cap", int64_t{0});
        }
        cfg.test_cadence = j.value("test_cadence", 2);
        if (j.contains("early_stop")) {
            cfg.early_stop.patience = j["early_stop"].value("patience", 0);
            cfg.early_stop.min_delta = j["early_stop"].value("min_delta", 0.0);
        }
        cfg.output_dir = j.value("output_dir", std::string("."));
        cfg.resume_from = j.value("resume_from", std::string());
    } catch (const json::exception& e) {
        throw ValidationError(std::string("experiment config: ") + e.what());
    }
    validate_config(cfg);
    return cfg;
}

ExperimentConfig config_from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return config_from_json_text(text);
}

std::string config_to_json_text(const ExperimentConfig& cfg) {
    json j{{"name", cfg.name},
           {"network", to_string(cfg.network)},
           {"batch_size", cfg.batch_size},
           {"load_weights", cfg.load_weights},
           {"weights_path", cfg.weights_path},
           {"freeze", {{"variant", to_string(cfg.freeze.variant)}, {"prefixes", cfg.freeze.freeze_prefixes}}},
           {"dropout_keep", cfg.dropout_keep},
           {"start_lr", cfg.start_lr},
           {"decay_step", cfg.decay_step},
           {"decay_rate", cfg.decay_rate},
           {"batch_norm", cfg.batch_norm},
           {"num_aug", cfg.num_aug},
           {"optimizer", to_string(cfg.optimizer)},
           {"epochs", cfg.epochs},
           {"seed", cfg.seed},
           {"scale",
            {{"input_side", cfg.scale.input_side},
             {"width_multiplier", cfg.scale.width_multiplier},
             {"blocks_per_stage", cfg.scale.blocks_per_stage}}},
           {"data",
            {{"manifest", cfg.data.manifest},
             {"split", cfg.data.split},
             {"split_seed", cfg.data.split_seed},
             {"images_root", cfg.data.images_root},
             {"rebalance_cap", cfg.data.rebalance_cap}}},
           {"test_cadence", cfg.test_cadence},
           {"early_stop", {{"patience", cfg.early_stop.patience}, {"min_delta", cfg.early_stop.min_delta}}},
           {"output_dir", cfg.output_dir},
           {"resume_from", cfg.resume_from}};
    return j.dump(2);
}

void validate_config(const ExperimentConfig& cfg) {
    if (cfg.batch_size < 1) throw ValidationError("batch_size must be >= 1");
    if (cfg.epochs < 1) throw ValidationError("epochs must be >= 1");
    if (cfg.dropout_keep < 0.0 || cfg.dropout_keep > 1.0)
        throw ValidationError("dropout_keep must be in [0,1]");
    if (!(cfg.start_lr > 0.0)) throw ValidationError("start_lr must be > 0");
    if (cfg.decay_step < 0) throw ValidationError("decay_step must be >= 0");
    if (!(cfg.decay_rate > 0.0 && cfg.decay_rate <= 1.0))
        throw ValidationError("decay_rate must be in (0,1]");
    if (cfg.test_cadence < 1) throw ValidationError("test_cadence must be >= 1");
    if (cfg.early_stop.patience < 0) throw ValidationError("early_stop.patience must be >= 0");
    if (cfg.load_weights && cfg.weights_path.empty())
        throw ValidationError("load_weights set but weights_path is empty");
    if (cfg.scale.input_side < 16) throw ValidationError("scale.input_side must be >= 16");
    if (!(cfg.scale.width_multiplier > 0.0 && cfg.scale.width_multiplier <= 1.0))
        throw ValidationError("scale.width_multiplier must be in (0,1]");
    if (cfg.scale.blocks_per_stage < 1) throw ValidationError("scale.blocks_per_stage must be >= 1");
    // the preset domain check doubles as the num_aug/architecture validation
    build_preset(cfg.num_aug, arch_family(cfg.network), cfg.scale.input_side);
}

}  // namespace mfnet
