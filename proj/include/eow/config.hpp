#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "eow/data.hpp"
#include "eow/objective.hpp"

namespace eow {

// Flat key=value run configuration with a closed schema: unknown keys are
// rejected, every key has a documented default, and the resolved state can
// be echoed and hashed for reproducible run directories.
//
// Environment overrides: one variable per key, EOW_ + key upper-cased with
// dots mapped to underscores (train.lr -> EOW_TRAIN_LR).
class RunConfig {
public:
    static RunConfig defaults();
    static RunConfig from_file(const std::string& path);  // defaults + file + env

    void set(const std::string& key, const std::string& value);  // throws on unknown key
    void apply_env_overrides();

    const std::string& get(const std::string& key) const;
    double get_double(const std::string& key) const;
    int get_int(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    std::vector<double> get_double_list(const std::string& key) const;
    std::vector<int> get_int_list(const std::string& key) const;

    std::string resolved_text() const;   // sorted key=value lines
    std::uint64_t config_hash() const;   // over resolved text minus the seed key
    std::string run_dir_name(std::uint64_t seed) const;

    Dataset build_dataset() const;
    MlpConfig model_config(int input_dim, int num_classes) const;
    TrainConfig train_config() const;

    static std::string describe_schema();  // key, default, description table

private:
    std::map<std::string, std::string> values_;
};

std::uint64_t fnv1a64(const std::string& text);

}  // namespace eow
