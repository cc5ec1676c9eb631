#include "gproto/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "gproto/errors.hpp"
#include "gproto/rng.hpp"

namespace gproto {

const char* to_string(DistanceMode mode) {
    switch (mode) {
        case DistanceMode::variance_weighted: return "variance-weighted";
        case DistanceMode::inverse_variance: return "inverse-variance";
        case DistanceMode::unit: return "euclidean";
    }
    return "?";
}

const char* to_string(WeightMode mode) {
    switch (mode) {
        case WeightMode::attention: return "attention";
        case WeightMode::linear_only: return "linear-only";
        case WeightMode::equal: return "equal";
        case WeightMode::single_view: return "single-view";
    }
    return "?";
}

DistanceMode distance_mode_from_string(const std::string& s) {
    if (s == "variance-weighted") return DistanceMode::variance_weighted;
    if (s == "inverse-variance") return DistanceMode::inverse_variance;
    if (s == "euclidean") return DistanceMode::unit;
    throw ConfigError("unknown distance mode '" + s + "'");
}

WeightMode weight_mode_from_string(const std::string& s) {
    if (s == "attention") return WeightMode::attention;
    if (s == "linear-only") return WeightMode::linear_only;
    if (s == "equal") return WeightMode::equal;
    if (s == "single-view") return WeightMode::single_view;
    throw ConfigError("unknown weight mode '" + s + "'");
}

const char* to_string(ParamBlock block) {
    switch (block) {
        case ParamBlock::prompts: return "prompts";
        case ParamBlock::theta: return "theta";
        case ParamBlock::phi1: return "phi1";
        case ParamBlock::phi2: return "phi2";
        case ParamBlock::tau1: return "tau1";
        case ParamBlock::tau2: return "tau2";
    }
    return "?";
}

void ModelConfig::validate() const {
    if (dim < 1) throw ConfigError("model: dim must be >= 1");
    if (prompt_len < 1) throw ConfigError("model: prompt_len must be >= 1");
    if (heads < 1) throw ConfigError("model: heads must be >= 1");
    if (dim % heads != 0) {
        throw ConfigError("model: dim " + std::to_string(dim) + " not divisible by heads " +
                          std::to_string(heads));
    }
    if (single_view < 0 || single_view >= kNumViews) {
        throw ConfigError("model: single_view must be in [0, 4)");
    }
}

namespace {

void shape_params(ModelParams& p, const ModelConfig& c) {
    const int d = c.dim;
    for (auto& prompt : p.prompts) prompt = MatT<double>(c.prompt_len, d);
    p.enc.wq = MatT<double>(d, d);
    p.enc.wk = MatT<double>(d, d);
    p.enc.wv = MatT<double>(d, d);
    p.enc.wo = MatT<double>(d, d);
    p.enc.w_mean = MatT<double>(d, d);
    p.enc.w_var = MatT<double>(d, d);
    p.enc.b_mean.assign(static_cast<size_t>(d), 0.0);
    p.enc.b_var.assign(static_cast<size_t>(d), 0.0);
    p.mix.aq = MatT<double>(2 * d, 2 * d);
    p.mix.ak = MatT<double>(2 * d, 2 * d);
    p.mix.av = MatT<double>(2 * d, 2 * d);
    p.mix.ao = MatT<double>(2 * d, 2 * d);
    p.mix.w_score.assign(static_cast<size_t>(2 * d), 0.0);
    p.mix.b_score = 0.0;
    p.tau1 = 0.1;
    p.tau2 = 0.2;
}

void xavier_fill(MatT<double>& m, Rng& rng) {
    const double bound = std::sqrt(6.0 / (m.rows + m.cols));
    for (double& x : m.a) x = (2.0 * rng.uniform() - 1.0) * bound;
}

// Identity plus small noise. Square projections start as near-orthogonal
// maps, so attention begins as a plain dot-product lookup instead of a
// random rotation and the optimizer only has to learn the deviation.
void identity_fill(MatT<double>& m, Rng& rng) {
    for (int r = 0; r < m.rows; ++r) {
        for (int c = 0; c < m.cols; ++c) {
            m(r, c) = (r == c ? 1.0 : 0.0) + rng.normal(0.0, 0.02);
        }
    }
}

}  // namespace

ModelParams zeros_like(const ModelConfig& config) {
    ModelParams p;
    shape_params(p, config);
    p.tau1 = 0.0;
    p.tau2 = 0.0;
    return p;
}

ModelParams init_params(const ModelConfig& config, uint64_t seed) {
    config.validate();
    ModelParams p;
    shape_params(p, config);
    Rng rng(derive_seed(seed, 3));
    // Prompt rows start on a signed-coordinate grid (+e_0.., then -e_0..,
    // wrapping) plus noise. The rows then act as a spread-out key/value
    // codebook from the first step rather than near-identical small
    // vectors that attention cannot tell apart.
    for (auto& prompt : p.prompts) {
        for (int r = 0; r < prompt.rows; ++r) {
            const int slot = r % (2 * config.dim);
            const int coord = slot % config.dim;
            const double sign = slot < config.dim ? 1.0 : -1.0;
            for (int c = 0; c < prompt.cols; ++c) {
                prompt(r, c) = (c == coord ? sign : 0.0) + rng.normal(0.0, 0.02);
            }
        }
    }
    identity_fill(p.enc.wq, rng);
    identity_fill(p.enc.wk, rng);
    identity_fill(p.enc.wv, rng);
    identity_fill(p.enc.wo, rng);
    identity_fill(p.enc.w_mean, rng);
    xavier_fill(p.enc.w_var, rng);
    xavier_fill(p.mix.aq, rng);
    xavier_fill(p.mix.ak, rng);
    xavier_fill(p.mix.av, rng);
    xavier_fill(p.mix.ao, rng);
    {
        const double bound = std::sqrt(6.0 / (2 * config.dim + 1));
        for (double& x : p.mix.w_score) x = (2.0 * rng.uniform() - 1.0) * bound;
    }
    return p;
}

ModelParamsT<Var> lift_params(const ModelParams& params, Tape& tape) {
    ModelParamsT<Var> lifted;
    for (int j = 0; j < kNumViews; ++j) {
        lifted.prompts[static_cast<size_t>(j)].rows = params.prompts[static_cast<size_t>(j)].rows;
        lifted.prompts[static_cast<size_t>(j)].cols = params.prompts[static_cast<size_t>(j)].cols;
    }
    auto copy_mat = [&tape](const MatT<double>& src, MatT<Var>& dst) {
        dst.rows = src.rows;
        dst.cols = src.cols;
        dst.a.clear();
        dst.a.reserve(src.a.size());
        for (double x : src.a) dst.a.push_back(Var::leaf(tape, x));
    };
    auto copy_vec = [&tape](const std::vector<double>& src, std::vector<Var>& dst) {
        dst.clear();
        dst.reserve(src.size());
        for (double x : src) dst.push_back(Var::leaf(tape, x));
    };
    for (int j = 0; j < kNumViews; ++j) {
        copy_mat(params.prompts[static_cast<size_t>(j)], lifted.prompts[static_cast<size_t>(j)]);
    }
    copy_mat(params.enc.wq, lifted.enc.wq);
    copy_mat(params.enc.wk, lifted.enc.wk);
    copy_mat(params.enc.wv, lifted.enc.wv);
    copy_mat(params.enc.wo, lifted.enc.wo);
    copy_mat(params.enc.w_mean, lifted.enc.w_mean);
    copy_mat(params.enc.w_var, lifted.enc.w_var);
    copy_vec(params.enc.b_mean, lifted.enc.b_mean);
    copy_vec(params.enc.b_var, lifted.enc.b_var);
    copy_mat(params.mix.aq, lifted.mix.aq);
    copy_mat(params.mix.ak, lifted.mix.ak);
    copy_mat(params.mix.av, lifted.mix.av);
    copy_mat(params.mix.ao, lifted.mix.ao);
    copy_vec(params.mix.w_score, lifted.mix.w_score);
    lifted.mix.b_score = Var::leaf(tape, params.mix.b_score);
    lifted.tau1 = Var::leaf(tape, params.tau1);
    lifted.tau2 = Var::leaf(tape, params.tau2);
    return lifted;
}

ModelParams read_gradients(const ModelParamsT<Var>& params, const std::vector<double>& adjoints,
                           const ModelConfig& config) {
    ModelParams grads = zeros_like(config);
    auto refs = flatten_params(grads);
    size_t i = 0;
    visit_params(params, [&](ParamBlock, bool, const Var& v) {
        *refs[i++].value = adjoints[static_cast<size_t>(v.index())];
    });
    return grads;
}

namespace {

constexpr char kCheckpointMagic[8] = {'G', 'P', 'R', 'O', 'T', 'O', 'C', '1'};

void write_i32(std::ostream& out, int32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }
void write_u8(std::ostream& out, uint8_t v) { out.write(reinterpret_cast<const char*>(&v), 1); }

int32_t read_i32(std::istream& in) {
    int32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
uint8_t read_u8(std::istream& in) {
    uint8_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 1);
    return v;
}

void write_tensor(std::ostream& out, const char* name, const double* data, int rows, int cols) {
    const int32_t len = static_cast<int32_t>(std::strlen(name));
    write_i32(out, len);
    out.write(name, len);
    write_i32(out, rows);
    write_i32(out, cols);
    out.write(reinterpret_cast<const char*>(data),
              static_cast<std::streamsize>(sizeof(double)) * rows * cols);
}

void read_tensor(std::istream& in, const char* name, double* data, int rows, int cols) {
    const int32_t len = read_i32(in);
    std::string got(static_cast<size_t>(len), '\0');
    in.read(got.data(), len);
    if (got != name) throw SchemaError("checkpoint: expected tensor '" + std::string(name) + "', found '" + got + "'");
    const int32_t r = read_i32(in);
    const int32_t c = read_i32(in);
    if (r != rows || c != cols) {
        throw SchemaError("checkpoint: tensor '" + got + "' has shape " + std::to_string(r) + "x" +
                          std::to_string(c) + ", expected " + std::to_string(rows) + "x" +
                          std::to_string(cols));
    }
    in.read(reinterpret_cast<char*>(data),
            static_cast<std::streamsize>(sizeof(double)) * rows * cols);
    if (!in) throw SchemaError("checkpoint: truncated tensor '" + got + "'");
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelConfig& config,
                     const ModelParams& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open checkpoint '" + path + "' for writing");
    out.write(kCheckpointMagic, 8);
    write_i32(out, config.dim);
    write_i32(out, config.prompt_len);
    write_i32(out, config.heads);
    write_u8(out, config.pool_all ? 1 : 0);
    write_u8(out, static_cast<uint8_t>(config.distance));
    write_u8(out, static_cast<uint8_t>(config.weights));
    write_i32(out, config.single_view);

    static const char* kPromptNames[kNumViews] = {"prompt_main", "prompt_head", "prompt_tail",
                                                  "prompt_context"};
    for (int j = 0; j < kNumViews; ++j) {
        const auto& m = params.prompts[static_cast<size_t>(j)];
        write_tensor(out, kPromptNames[j], m.a.data(), m.rows, m.cols);
    }
    auto mat = [&out](const char* name, const MatT<double>& m) {
        write_tensor(out, name, m.a.data(), m.rows, m.cols);
    };
    auto vec = [&out](const char* name, const std::vector<double>& v) {
        write_tensor(out, name, v.data(), 1, static_cast<int>(v.size()));
    };
    mat("enc_wq", params.enc.wq);
    mat("enc_wk", params.enc.wk);
    mat("enc_wv", params.enc.wv);
    mat("enc_wo", params.enc.wo);
    mat("enc_w_mean", params.enc.w_mean);
    mat("enc_w_var", params.enc.w_var);
    vec("enc_b_mean", params.enc.b_mean);
    vec("enc_b_var", params.enc.b_var);
    mat("mix_aq", params.mix.aq);
    mat("mix_ak", params.mix.ak);
    mat("mix_av", params.mix.av);
    mat("mix_ao", params.mix.ao);
    vec("mix_w_score", params.mix.w_score);
    write_tensor(out, "mix_b_score", &params.mix.b_score, 1, 1);
    write_tensor(out, "tau1", &params.tau1, 1, 1);
    write_tensor(out, "tau2", &params.tau2, 1, 1);
    if (!out) throw DataError("write failed for checkpoint '" + path + "'");
}

void load_checkpoint(const std::string& path, ModelConfig& config, ModelParams& params) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint '" + path + "'");
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
        throw SchemaError("checkpoint '" + path + "': bad magic");
    }
    config.dim = read_i32(in);
    config.prompt_len = read_i32(in);
    config.heads = read_i32(in);
    config.pool_all = read_u8(in) != 0;
    config.distance = static_cast<DistanceMode>(read_u8(in));
    config.weights = static_cast<WeightMode>(read_u8(in));
    config.single_view = read_i32(in);
    config.validate();

    params = zeros_like(config);
    static const char* kPromptNames[kNumViews] = {"prompt_main", "prompt_head", "prompt_tail",
                                                  "prompt_context"};
    for (int j = 0; j < kNumViews; ++j) {
        auto& m = params.prompts[static_cast<size_t>(j)];
        read_tensor(in, kPromptNames[j], m.a.data(), m.rows, m.cols);
    }
    auto mat = [&in](const char* name, MatT<double>& m) {
        read_tensor(in, name, m.a.data(), m.rows, m.cols);
    };
    auto vec = [&in](const char* name, std::vector<double>& v) {
        read_tensor(in, name, v.data(), 1, static_cast<int>(v.size()));
    };
    mat("enc_wq", params.enc.wq);
    mat("enc_wk", params.enc.wk);
    mat("enc_wv", params.enc.wv);
    mat("enc_wo", params.enc.wo);
    mat("enc_w_mean", params.enc.w_mean);
    mat("enc_w_var", params.enc.w_var);
    vec("enc_b_mean", params.enc.b_mean);
    vec("enc_b_var", params.enc.b_var);
    mat("mix_aq", params.mix.aq);
    mat("mix_ak", params.mix.ak);
    mat("mix_av", params.mix.av);
    mat("mix_ao", params.mix.ao);
    vec("mix_w_score", params.mix.w_score);
    read_tensor(in, "mix_b_score", &params.mix.b_score, 1, 1);
    read_tensor(in, "tau1", &params.tau1, 1, 1);
    read_tensor(in, "tau2", &params.tau2, 1, 1);
}

}  // namespace gproto
