#pragma once

#include <cmath>
#include <vector>

#include "gproto/errors.hpp"
#include "gproto/model.hpp"
#include "gproto/tape.hpp"
#include "gproto/types.hpp"

namespace gproto {

// Row vector times matrix: out_c = sum_r x_r * w(r, c).
template <class S>
std::vector<S> row_times(const std::vector<S>& x, const MatT<S>& w) {
    std::vector<S> out;
    out.reserve(static_cast<size_t>(w.cols));
    for (int c = 0; c < w.cols; ++c) {
        S acc = x[0] * w(0, c);
        for (int r = 1; r < w.rows; ++r) acc += x[static_cast<size_t>(r)] * w(r, c);
        out.push_back(acc);
    }
    return out;
}

// One multi-head self-attention pass without positional encoding: scaled
// dot-product scores, per-row softmax, value mixing, output projection.
// Outputs are produced only for `query_rows` (the positions later pooled);
// keys and values cover the whole sequence, so those rows still see every
// token. No residual path or normalization: the block is used as a set
// pooler, not as a deep-stack layer.
template <class S>
std::vector<std::vector<S>> attention_rows(const std::vector<std::vector<S>>& tokens,
                                           const std::vector<int>& query_rows,
                                           const MatT<S>& wq, const MatT<S>& wk,
                                           const MatT<S>& wv, const MatT<S>& wo, int heads) {
    const int t_count = static_cast<int>(tokens.size());
    const int dm = wq.rows;
    const int head_dim = dm / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

    std::vector<std::vector<S>> keys, values;
    keys.reserve(static_cast<size_t>(t_count));
    values.reserve(static_cast<size_t>(t_count));
    for (const auto& tok : tokens) {
        keys.push_back(row_times(tok, wk));
        values.push_back(row_times(tok, wv));
    }

    std::vector<std::vector<S>> out;
    out.reserve(query_rows.size());
    for (int qr : query_rows) {
        const std::vector<S> q = row_times(tokens[static_cast<size_t>(qr)], wq);
        std::vector<S> mixed(static_cast<size_t>(dm), S{});
        for (int h = 0; h < heads; ++h) {
            const int off = h * head_dim;
            std::vector<S> scores;
            scores.reserve(static_cast<size_t>(t_count));
            for (int u = 0; u < t_count; ++u) {
                S acc = q[static_cast<size_t>(off)] * keys[static_cast<size_t>(u)][static_cast<size_t>(off)];
                for (int i = 1; i < head_dim; ++i) {
                    acc += q[static_cast<size_t>(off + i)] * keys[static_cast<size_t>(u)][static_cast<size_t>(off + i)];
                }
                scores.push_back(acc * scale);
            }
            const std::vector<S> attn = softmax(scores);
            for (int i = 0; i < head_dim; ++i) {
                S acc = attn[0] * values[0][static_cast<size_t>(off + i)];
                for (int u = 1; u < t_count; ++u) {
                    acc += attn[static_cast<size_t>(u)] * values[static_cast<size_t>(u)][static_cast<size_t>(off + i)];
                }
                mixed[static_cast<size_t>(off + i)] = acc;
            }
        }
        out.push_back(row_times(mixed, wo));
    }
    return out;
}

// Set encoder for one view: prompt-prefixed support sequence through the
// shared attention block, mean-pooled over the prompt positions (or the whole
// sequence with pool_all), then read out as a Gaussian via the mean head and
// a softplus-floored variance head.
template <class S>
ViewGaussianT<S> encode_view(const ModelConfig& config, const ModelParamsT<S>& params, int view,
                             const std::vector<const std::vector<double>*>& support) {
    if (support.empty()) throw InputError("encode_view: empty support set (K = 0)");
    const int d = config.dim;
    for (const auto* z : support) {
        if (static_cast<int>(z->size()) != d) {
            throw InputError("encode_view: support dimension " + std::to_string(z->size()) +
                             ", model dimension " + std::to_string(d));
        }
    }

    const MatT<S>& prompt = params.prompts[static_cast<size_t>(view)];
    const S& exemplar = params.tau1;
    std::vector<std::vector<S>> tokens;
    tokens.reserve(static_cast<size_t>(config.prompt_len) + support.size());
    for (int r = 0; r < prompt.rows; ++r) {
        std::vector<S> row;
        row.reserve(static_cast<size_t>(d));
        for (int c = 0; c < d; ++c) row.push_back(prompt(r, c));
        tokens.push_back(std::move(row));
    }
    for (const auto* z : support) {
        std::vector<S> row;
        row.reserve(static_cast<size_t>(d));
        for (double x : *z) row.push_back(constant_like(exemplar, x));
        tokens.push_back(std::move(row));
    }

    const int pooled_rows = config.pool_all ? static_cast<int>(tokens.size()) : config.prompt_len;
    std::vector<int> query_rows(static_cast<size_t>(pooled_rows));
    for (int i = 0; i < pooled_rows; ++i) query_rows[static_cast<size_t>(i)] = i;

    const auto rows = attention_rows(tokens, query_rows, params.enc.wq, params.enc.wk,
                                     params.enc.wv, params.enc.wo, config.heads);
    std::vector<S> pooled(static_cast<size_t>(d), S{});
    for (int c = 0; c < d; ++c) {
        S acc = rows[0][static_cast<size_t>(c)];
        for (size_t r = 1; r < rows.size(); ++r) acc += rows[r][static_cast<size_t>(c)];
        pooled[static_cast<size_t>(c)] = acc / static_cast<double>(rows.size());
    }

    ViewGaussianT<S> g;
    const std::vector<S> raw_mean = row_times(pooled, params.enc.w_mean);
    const std::vector<S> raw_var = row_times(pooled, params.enc.w_var);
    g.mean.reserve(static_cast<size_t>(d));
    g.variance.reserve(static_cast<size_t>(d));
    for (int i = 0; i < d; ++i) {
        g.mean.push_back(raw_mean[static_cast<size_t>(i)] + params.enc.b_mean[static_cast<size_t>(i)]);
        g.variance.push_back(softplus(raw_var[static_cast<size_t>(i)] + params.enc.b_var[static_cast<size_t>(i)]) + 1e-6);
    }
    for (int i = 0; i < d; ++i) {
        if (!std::isfinite(scalar_value(g.mean[static_cast<size_t>(i)])) ||
            !std::isfinite(scalar_value(g.variance[static_cast<size_t>(i)]))) {
            throw NumericError("encode_view: non-finite prototype statistics (training diverged)");
        }
    }
    return g;
}

}  // namespace gproto
