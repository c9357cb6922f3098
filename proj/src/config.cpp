#include "eow/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace eow {

namespace {

struct SchemaEntry {
    const char* key;
    const char* def;
    const char* desc;
};

// The closed schema. Defaults follow the reference protocol; desk-scale runs
// override epochs/steps in their config files.
const SchemaEntry kSchema[] = {
    {"seed", "1", "master RNG seed"},
    {"dataset.kind", "gaussian_mixture", "gaussian_mixture | two_moons | idx | csv"},
    {"dataset.n", "2000", "sample count for synthetic generators"},
    {"dataset.k", "2", "mixture component / class count"},
    {"dataset.noise", "0.1", "two_moons noise stddev"},
    {"dataset.seed", "9000", "generator seed (decoupled from the run seed)"},
    {"dataset.images", "", "idx: images file path"},
    {"dataset.labels", "", "idx: labels file path"},
    {"dataset.limit", "0", "idx/csv: keep only the first N samples (0 = all)"},
    {"dataset.path", "", "csv: dataset file path"},
    {"split.train", "0.8", "train fraction"},
    {"split.val", "0", "validation fraction (temperature scaling)"},
    {"split.test", "0.2", "test fraction"},
    {"split.seed", "1234", "shuffle seed for the split"},
    {"model.hidden", "128,128,128", "hidden layer widths (stages)"},
    {"train.loss", "eow", "eow | vanilla | label_smoothing"},
    {"train.lambda", "0.1", "energy term weight"},
    {"train.lr", "1e-4", "SGD learning rate"},
    {"train.momentum", "0.9", "SGD momentum"},
    {"train.weight_decay", "5e-4", "L2 weight decay"},
    {"train.batch_size", "64", "minibatch size"},
    {"train.epochs", "200", "training epochs"},
    {"train.lr_decay", "0.1", "decay factor"},
    {"train.lr_decay_at", "0.5,0.75", "epoch fractions where lr decays"},
    {"train.label_smooth_eps", "0.1", "label smoothing epsilon"},
    {"sgld.alpha", "2", "SGLD step size"},
    {"sgld.sigma", "1e-3", "SGLD noise stddev"},
    {"sgld.steps", "100", "SGLD updates per round"},
    {"sgld.stage", "2", "latent stage for sampling (0 = input space)"},
    {"sgld.init", "data", "data | noise | persistent"},
    {"sgld.literal_sign", "false", "flip the sampling energy sign (comparison mode)"},
    {"sgld.grad_clip", "100", "per-sample L2 clip on dE/dz (0 disables)"},
    {"eval.bins", "15", "ECE bin count"},
};

bool known_key(const std::string& key) {
    for (const auto& e : kSchema)
        if (key == e.key) return true;
    return false;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string env_name(const std::string& key) {
    std::string name = "EOW_" + key;
    for (auto& c : name) c = c == '.' ? '_' : char(std::toupper(static_cast<unsigned char>(c)));
    return name;
}

}  // namespace

std::uint64_t fnv1a64(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

RunConfig RunConfig::defaults() {
    RunConfig cfg;
    for (const auto& e : kSchema) cfg.values_[e.key] = e.def;
    return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("config: cannot open " + path);
    RunConfig cfg = defaults();
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const auto eq = stripped.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config: line " + std::to_string(lineno) +
                                     " is not key=value: " + stripped);
        cfg.set(trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)));
    }
    cfg.apply_env_overrides();
    return cfg;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    if (!known_key(key)) throw std::runtime_error("config: unknown key '" + key + "'");
    values_[key] = value;
}

void RunConfig::apply_env_overrides() {
    for (const auto& e : kSchema)
        if (const char* v = std::getenv(env_name(e.key).c_str())) values_[e.key] = v;
}

const std::string& RunConfig::get(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw std::runtime_error("config: unknown key '" + key + "'");
    return it->second;
}

double RunConfig::get_double(const std::string& key) const {
    const std::string& s = get(key);
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::runtime_error("config: " + key + " is not a number: " + s);
    return v;
}

int RunConfig::get_int(const std::string& key) const {
    const std::string& s = get(key);
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used != s.size()) throw std::runtime_error("config: " + key + " is not an integer: " + s);
    return v;
}

bool RunConfig::get_bool(const std::string& key) const {
    const std::string& s = get(key);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw std::runtime_error("config: " + key + " is not a boolean: " + s);
}

std::vector<double> RunConfig::get_double_list(const std::string& key) const {
    std::vector<double> out;
    std::stringstream ss(get(key));
    std::string cell;
    while (std::getline(ss, cell, ','))
        if (!trim(cell).empty()) out.push_back(std::stod(trim(cell)));
    return out;
}

std::vector<int> RunConfig::get_int_list(const std::string& key) const {
    std::vector<int> out;
    std::stringstream ss(get(key));
    std::string cell;
    while (std::getline(ss, cell, ','))
        if (!trim(cell).empty()) out.push_back(std::stoi(trim(cell)));
    return out;
}

std::string RunConfig::resolved_text() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + "=" + v + "\n";  // std::map: sorted
    return out;
}

std::uint64_t RunConfig::config_hash() const {
    std::string text;
    for (const auto& [k, v] : values_)
        if (k != "seed") text += k + "=" + v + "\n";
    return fnv1a64(text);
}

std::string RunConfig::run_dir_name(std::uint64_t seed) const {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "run_%016llx_s%llu",
                  static_cast<unsigned long long>(config_hash()),
                  static_cast<unsigned long long>(seed));
    return buf;
}

Dataset RunConfig::build_dataset() const {
    const std::string& kind = get("dataset.kind");
    Dataset ds;
    if (kind == "gaussian_mixture") {
        ds = gen_gaussian_mixture(std::uint64_t(get_int("dataset.seed")), get_int("dataset.n"),
                                  get_int("dataset.k"));
    } else if (kind == "two_moons") {
        ds = gen_two_moons(std::uint64_t(get_int("dataset.seed")), get_int("dataset.n"),
                           get_double("dataset.noise"));
    } else if (kind == "idx") {
        ds = load_idx(get("dataset.images"), get("dataset.labels"));
    } else if (kind == "csv") {
        ds = load_csv(get("dataset.path"));
    } else {
        throw std::runtime_error("config: unknown dataset.kind '" + kind + "'");
    }
    const int limit = get_int("dataset.limit");
    if (limit > 0 && limit < ds.size()) ds = subset(ds, limit);
    return ds;
}

MlpConfig RunConfig::model_config(int input_dim, int num_classes) const {
    MlpConfig cfg;
    cfg.input_dim = input_dim;
    cfg.num_classes = num_classes;
    cfg.hidden = get_int_list("model.hidden");
    if (cfg.hidden.empty()) throw std::runtime_error("config: model.hidden must be nonempty");
    return cfg;
}

TrainConfig RunConfig::train_config() const {
    TrainConfig cfg;
    cfg.loss = loss_kind_from_name(get("train.loss"));
    cfg.lambda = get_double("train.lambda");
    cfg.lr = get_double("train.lr");
    cfg.momentum = get_double("train.momentum");
    cfg.weight_decay = get_double("train.weight_decay");
    cfg.batch_size = get_int("train.batch_size");
    cfg.epochs = get_int("train.epochs");
    cfg.lr_decay = get_double("train.lr_decay");
    cfg.lr_decay_at = get_double_list("train.lr_decay_at");
    cfg.label_smooth_eps = get_double("train.label_smooth_eps");
    cfg.sgld.alpha = get_double("sgld.alpha");
    cfg.sgld.sigma = get_double("sgld.sigma");
    cfg.sgld.steps = get_int("sgld.steps");
    cfg.sgld.stage = get_int("sgld.stage");
    cfg.sgld.grad_clip = get_double("sgld.grad_clip");
    cfg.sgld.literal_sign = get_bool("sgld.literal_sign");
    const std::string& init = get("sgld.init");
    if (init == "data")
        cfg.sgld.init = ChainInit::Data;
    else if (init == "noise")
        cfg.sgld.init = ChainInit::Noise;
    else if (init == "persistent")
        cfg.sgld.init = ChainInit::Persistent;
    else
        throw std::runtime_error("config: unknown sgld.init '" + init + "'");
    if (cfg.batch_size <= 0 || cfg.epochs < 0 || cfg.lr <= 0)
        throw std::runtime_error("config: nonpositive training parameter");
    if (cfg.lambda < 0 || cfg.sgld.alpha <= 0 || cfg.sgld.sigma < 0 || cfg.sgld.steps < 0)
        throw std::runtime_error("config: invalid objective/sgld parameter");
    return cfg;
}

std::string RunConfig::describe_schema() {
    std::string out;
    for (const auto& e : kSchema) {
        out += e.key;
        out += " (default: ";
        out += e.def[0] ? e.def : "<empty>";
        out += "): ";
        out += e.desc;
        out += "\n";
    }
    return out;
}

}  // namespace eow
