#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "eow/tape.hpp"

namespace eow {

// Feed-forward classifier with K+1 logits: K class scores plus one
// open-world uncertainty score. The hidden layers are addressable stages so
// a sampler can enter the network at an intermediate latent (stage 0 = the
// raw input space).

struct DenseLayer {
    Array w;  // [in x out]
    Array b;  // [out]
};

struct MlpConfig {
    int input_dim = 2;
    std::vector<int> hidden = {128, 128, 128};
    int num_classes = 2;  // K; the head emits K+1 logits
};

struct Prediction {
    int label = 0;          // 0-based class in [0, K)
    double confidence = 0;  // K+1-way softmax score of the predicted class
    double uncertainty = 0; // K+1-th softmax score
};

class EowClassifier {
public:
    EowClassifier() = default;

    // He-initialized weights (N(0, 2/fan_in)), zero biases.
    static EowClassifier init(const MlpConfig& cfg, Rng& rng);

    const MlpConfig& config() const { return cfg_; }
    int num_classes() const { return cfg_.num_classes; }
    int num_stages() const { return int(stages_.size()); }
    int input_dim() const { return cfg_.input_dim; }
    // Output width of stage s; s=0 is the input space.
    int stage_width(int s) const;

    std::vector<Array*> params();
    std::vector<const Array*> params() const;
    std::size_t param_count() const;
    // FNV-1a over the raw parameter bytes; detects any mutation.
    std::uint64_t param_checksum() const;

    // Tape-free evaluation paths.
    Array forward_logits(const Array& x) const;              // [B x K+1]
    Array encode_to_stage(const Array& x, int s) const;      // activation after stage s
    Array head_from_stage(const Array& z, int s) const;      // stages s+1..S then head
    std::vector<double> probs(const double* logits_row) const;  // K+1 softmax
    Prediction predict(const Array& x_row) const;            // single input [D] or [1xD]

    DenseLayer& stage(int i) { return stages_[std::size_t(i)]; }
    const DenseLayer& stage(int i) const { return stages_[std::size_t(i)]; }
    DenseLayer& head() { return head_; }
    const DenseLayer& head() const { return head_; }

private:
    MlpConfig cfg_;
    std::vector<DenseLayer> stages_;
    DenseLayer head_;
};

// Parameters recorded as tape leaves, for differentiable forward passes.
struct BoundModel {
    const EowClassifier* model = nullptr;
    std::vector<Var> stage_w, stage_b;
    Var head_w, head_b;

    Var logits_from_input(Tape& t, Var x) const;          // full forward
    Var logits_from_stage(Tape& t, Var z, int s) const;   // stages s+1..S then head
};

BoundModel bind_model(Tape& t, const EowClassifier& m);

// Checkpoint format: little-endian binary, versioned magic, shapes then the
// flat f64 parameter vector. Round-trips bit-exactly.
void save_checkpoint(const std::string& path, const EowClassifier& m,
                     const std::string& loss_kind);
EowClassifier load_checkpoint(const std::string& path, std::string* loss_kind = nullptr);

}  // namespace eow
