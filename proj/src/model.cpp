#include "eow/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "eow/kernels.hpp"

namespace eow {

namespace {

Array dense(const Array& x, const DenseLayer& l, bool relu_after) {
    Array out({x.rows(), l.w.cols()});
    kernels::active().gemm_nn(x.rows(), x.cols(), l.w.cols(), x.data(), l.w.data(), out.data(), false);
    for (int r = 0; r < out.rows(); ++r)
        kernels::active().add(out.data() + std::size_t(r) * out.cols(), l.b.data(),
                              out.data() + std::size_t(r) * out.cols(), std::size_t(out.cols()));
    if (relu_after) kernels::active().relu(out.data(), out.data(), out.numel());
    if (!kernels::active().all_finite(out.data(), out.numel()))
        throw NumericalError("dense layer produced non-finite values");
    return out;
}

Array as_matrix(const Array& x, int want_cols, const char* what) {
    if (x.rank() == 1) {
        if (x.shape()[0] != want_cols)
            throw ShapeError(std::string(what) + ": input width mismatch");
        return Array({1, want_cols}, std::vector<double>(x.data(), x.data() + x.numel()));
    }
    if (x.rank() != 2 || x.cols() != want_cols)
        throw ShapeError(std::string(what) + ": input width mismatch");
    return x;
}

}  // namespace

EowClassifier EowClassifier::init(const MlpConfig& cfg, Rng& rng) {
    if (cfg.input_dim <= 0 || cfg.num_classes <= 0)
        throw ShapeError("EowClassifier: positive dims required");
    EowClassifier m;
    m.cfg_ = cfg;
    int in = cfg.input_dim;
    for (int width : cfg.hidden) {
        DenseLayer l{Array::randn({in, width}, rng, std::sqrt(2.0 / double(in))),
                     Array::zeros({width})};
        m.stages_.push_back(std::move(l));
        in = width;
    }
    m.head_ = DenseLayer{Array::randn({in, cfg.num_classes + 1}, rng, std::sqrt(2.0 / double(in))),
                         Array::zeros({cfg.num_classes + 1})};
    return m;
}

int EowClassifier::stage_width(int s) const {
    if (s < 0 || s > num_stages()) throw ShapeError("stage index out of range");
    return s == 0 ? cfg_.input_dim : cfg_.hidden[std::size_t(s - 1)];
}

std::vector<Array*> EowClassifier::params() {
    std::vector<Array*> p;
    for (auto& l : stages_) {
        p.push_back(&l.w);
        p.push_back(&l.b);
    }
    p.push_back(&head_.w);
    p.push_back(&head_.b);
    return p;
}

std::vector<const Array*> EowClassifier::params() const {
    std::vector<const Array*> p;
    for (const auto& l : stages_) {
        p.push_back(&l.w);
        p.push_back(&l.b);
    }
    p.push_back(&head_.w);
    p.push_back(&head_.b);
    return p;
}

std::size_t EowClassifier::param_count() const {
    std::size_t n = 0;
    for (const Array* a : params()) n += a->numel();
    return n;
}

std::uint64_t EowClassifier::param_checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const Array* a : params()) {
        const auto* bytes = reinterpret_cast<const unsigned char*>(a->data());
        for (std::size_t i = 0; i < a->numel() * sizeof(double); ++i) {
            h ^= bytes[i];
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

Array EowClassifier::encode_to_stage(const Array& x, int s) const {
    if (s < 0 || s > num_stages()) throw ShapeError("encode_to_stage: stage out of range");
    Array h = as_matrix(x, cfg_.input_dim, "encode_to_stage");
    for (int i = 0; i < s; ++i) h = dense(h, stages_[std::size_t(i)], true);
    return h;
}

Array EowClassifier::head_from_stage(const Array& z, int s) const {
    if (s < 0 || s > num_stages()) throw ShapeError("head_from_stage: stage out of range");
    Array h = as_matrix(z, stage_width(s), "head_from_stage");
    for (int i = s; i < num_stages(); ++i) h = dense(h, stages_[std::size_t(i)], true);
    return dense(h, head_, false);
}

Array EowClassifier::forward_logits(const Array& x) const {
    return head_from_stage(encode_to_stage(x, num_stages()), num_stages());
}

std::vector<double> EowClassifier::probs(const double* logits_row) const {
    const int w = cfg_.num_classes + 1;
    std::vector<double> p(static_cast<std::size_t>(w));
    double m = logits_row[0];
    for (int j = 1; j < w; ++j) m = std::max(m, logits_row[j]);
    double s = 0.0;
    for (int j = 0; j < w; ++j) s += p[std::size_t(j)] = std::exp(logits_row[j] - m);
    for (auto& v : p) v /= s;
    return p;
}

Prediction EowClassifier::predict(const Array& x_row) const {
    const Array logits = forward_logits(x_row);
    if (logits.rows() != 1) throw ShapeError("predict: single input expected");
    const auto p = probs(logits.data());
    Prediction out;
    for (int j = 1; j < cfg_.num_classes; ++j)
        if (p[std::size_t(j)] > p[std::size_t(out.label)]) out.label = j;  // ties keep lowest index
    out.confidence = p[std::size_t(out.label)];
    out.uncertainty = p[std::size_t(cfg_.num_classes)];
    return out;
}

BoundModel bind_model(Tape& t, const EowClassifier& m) {
    BoundModel b;
    b.model = &m;
    for (int i = 0; i < m.num_stages(); ++i) {
        b.stage_w.push_back(t.leaf(m.stage(i).w));
        b.stage_b.push_back(t.leaf(m.stage(i).b));
    }
    b.head_w = t.leaf(m.head().w);
    b.head_b = t.leaf(m.head().b);
    return b;
}

Var BoundModel::logits_from_stage(Tape& t, Var z, int s) const {
    const int S = model->num_stages();
    if (s < 0 || s > S) throw ShapeError("logits_from_stage: stage out of range");
    if (t.value(z).cols() != model->stage_width(s))
        throw ShapeError("logits_from_stage: latent width mismatch");
    Var h = z;
    for (int i = s; i < S; ++i)
        h = relu(t, add_rows(t, matmul(t, h, stage_w[std::size_t(i)]), stage_b[std::size_t(i)]));
    return add_rows(t, matmul(t, h, head_w), head_b);
}

Var BoundModel::logits_from_input(Tape& t, Var x) const { return logits_from_stage(t, x, 0); }

namespace {

constexpr char kMagic[8] = {'E', 'O', 'W', 'M', 'D', 'L', '0', '1'};

template <typename T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error("checkpoint: truncated file");
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const EowClassifier& m,
                     const std::string& loss_kind) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    os.write(kMagic, sizeof(kMagic));
    write_pod<std::uint32_t>(os, std::uint32_t(m.config().input_dim));
    write_pod<std::uint32_t>(os, std::uint32_t(m.config().num_classes));
    write_pod<std::uint32_t>(os, std::uint32_t(m.config().hidden.size()));
    for (int w : m.config().hidden) write_pod<std::uint32_t>(os, std::uint32_t(w));
    write_pod<std::uint32_t>(os, std::uint32_t(loss_kind.size()));
    os.write(loss_kind.data(), std::streamsize(loss_kind.size()));
    for (const Array* a : m.params())
        os.write(reinterpret_cast<const char*>(a->data()),
                 std::streamsize(a->numel() * sizeof(double)));
    if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

EowClassifier load_checkpoint(const std::string& path, std::string* loss_kind) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    MlpConfig cfg;
    cfg.input_dim = int(read_pod<std::uint32_t>(is));
    cfg.num_classes = int(read_pod<std::uint32_t>(is));
    const auto n_hidden = read_pod<std::uint32_t>(is);
    cfg.hidden.clear();
    for (std::uint32_t i = 0; i < n_hidden; ++i) cfg.hidden.push_back(int(read_pod<std::uint32_t>(is)));
    const auto kind_len = read_pod<std::uint32_t>(is);
    std::string kind(kind_len, '\0');
    is.read(kind.data(), std::streamsize(kind_len));
    if (!is) throw std::runtime_error("checkpoint: truncated file");
    if (loss_kind) *loss_kind = kind;

    Rng dummy(0);
    EowClassifier m = EowClassifier::init(cfg, dummy);
    for (Array* a : m.params()) {
        is.read(reinterpret_cast<char*>(a->data()), std::streamsize(a->numel() * sizeof(double)));
        if (!is) throw std::runtime_error("checkpoint: truncated parameters");
    }
    is.peek();
    if (!is.eof()) throw std::runtime_error("checkpoint: trailing bytes in " + path);
    return m;
}

}  // namespace eow
