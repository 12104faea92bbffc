#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "navsim/core.hpp"
#include "navsim/world.hpp"

namespace navsim {

/// Lowercased whitespace tokens of an instruction.
inline std::vector<std::string> tokenize_instruction(std::string_view text) {
    std::vector<std::string> words;
    std::string cur;
    for (unsigned char ch : text) {
        if (std::isspace(ch)) {
            if (!cur.empty()) words.push_back(std::move(cur)), cur.clear();
        } else {
            cur.push_back(ch < 0x80 ? static_cast<char>(std::tolower(ch)) : static_cast<char>(ch));
        }
    }
    if (!cur.empty()) words.push_back(std::move(cur));
    return words;
}

struct InstructionEmbedding {
    std::vector<std::string> tokens;
    Matrix matrix;  // tokens.size() x C, unit-norm rows
};

inline constexpr std::size_t kDefaultQueryCount = 8;

/// Seeded encoder weights. Fill order from one xoshiro256** stream:
/// base queries, P_Q, P_V, W_q, W_k, W_v; entries uniform in [-1/sqrt(C), 1/sqrt(C)].
struct EncoderParams {
    std::uint64_t seed = 0;
    std::size_t c = kDefaultFeatureDim;
    std::size_t m = kDefaultQueryCount;
    Matrix base_queries;  // M x C
    Matrix proj_queried;  // P_Q, C x C
    Matrix proj_visual;   // P_V, C x C
    Matrix w_q, w_k, w_v;

    static EncoderParams make(std::uint64_t seed, std::size_t c = kDefaultFeatureDim,
                              std::size_t m = kDefaultQueryCount) {
        if (c == 0 || m == 0) throw ShapeError("encoder dimensions must be positive");
        EncoderParams p;
        p.seed = seed;
        p.c = c;
        p.m = m;
        Xoshiro256 rng(seed);
        const double bound = 1.0 / std::sqrt(static_cast<double>(c));
        auto fill = [&](std::size_t r, std::size_t cols) {
            Matrix mat(r, cols);
            for (auto& v : mat.data) v = rng.uniform(-bound, bound);
            return mat;
        };
        p.base_queries = fill(m, c);
        p.proj_queried = fill(c, c);
        p.proj_visual = fill(c, c);
        p.w_q = fill(c, c);
        p.w_k = fill(c, c);
        p.w_v = fill(c, c);
        return p;
    }
};

/// Attention weights softmax(Q K^T) row by row, max-subtracted.
inline Matrix attention_weights(const Matrix& q, const Matrix& k) {
    if (q.cols != k.cols) throw ShapeError("attention: query/key width mismatch");
    if (k.rows == 0) throw ShapeError("attention: empty key set");
    Matrix w(q.rows, k.rows);
    for (std::size_t i = 0; i < q.rows; ++i) {
        auto wi = w.row(i);
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < k.rows; ++j) {
            wi[j] = dot(q.row(i), k.row(j));
            mx = std::max(mx, wi[j]);
        }
        double sum = 0.0;
        for (auto& v : wi) {
            v = std::exp(v - mx);
            sum += v;
        }
        for (auto& v : wi) v /= sum;
    }
    return w;
}

/// Single-head unscaled attention: row i = sum_j softmax_j(Q_i . K_j) V_j.
inline Matrix attention(const Matrix& q, const Matrix& k, const Matrix& v) {
    if (k.rows != v.rows) throw ShapeError("attention: key/value row mismatch");
    return matmul(attention_weights(q, k), v);
}

inline InstructionEmbedding embed_instruction(std::string_view text, const EncoderParams& params) {
    InstructionEmbedding e;
    e.tokens = tokenize_instruction(text);
    if (e.tokens.empty()) throw std::invalid_argument("empty instruction");
    e.matrix = Matrix(e.tokens.size(), params.c);
    for (std::size_t i = 0; i < e.tokens.size(); ++i) {
        auto v = hash_embedding(e.tokens[i], params.seed, params.c);
        std::copy(v.begin(), v.end(), e.matrix.row(i).begin());
    }
    return e;
}

/// Instruction-aware queries: base queries plus cross-attention over the
/// instruction words and over the frame patches.
inline Matrix generate_queries(const FrameFeatures& x, const InstructionEmbedding& instr, const EncoderParams& params) {
    if (x.data.cols != params.c || instr.matrix.cols != params.c)
        throw ShapeError("generate_queries: feature width does not match encoder C");
    const Matrix q = matmul(params.base_queries, params.w_q);
    const Matrix from_text = attention(q, matmul(instr.matrix, params.w_k), matmul(instr.matrix, params.w_v));
    const Matrix from_vision = attention(q, matmul(x.data, params.w_k), matmul(x.data, params.w_v));
    Matrix out = params.base_queries;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += from_text.data[i] + from_vision.data[i];
    return out;
}

/// P_Q(mean over queries of softmax(Q X^T) X).
inline std::vector<double> instruction_queried_token(const FrameFeatures& x, const Matrix& queries,
                                                     const EncoderParams& params) {
    if (queries.cols != x.data.cols || x.data.cols != params.c)
        throw ShapeError("instruction_queried_token: width mismatch");
    if (queries.rows == 0) throw ShapeError("instruction_queried_token: no queries");
    const Matrix attended = attention(queries, x.data, x.data);
    std::vector<double> pooled(params.c, 0.0);
    for (std::size_t i = 0; i < attended.rows; ++i)
        for (std::size_t j = 0; j < params.c; ++j) pooled[j] += attended(i, j);
    for (auto& v : pooled) v /= static_cast<double>(attended.rows);
    return vecmat(pooled, params.proj_queried);
}

inline bool supported_token_count(std::size_t n_v) { return n_v == 1 || n_v == 4 || n_v == 16 || n_v == 64; }

/**
 * Average-pools an H x H patch map into an s x s grid (n_v = s^2), cells
 * in row-major order. H is inferred from the row count; it must be a
 * perfect square divisible by s.
 */
inline Matrix grid_pool(const Matrix& x, std::size_t n_v) {
    const auto side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(x.rows))));
    const auto cells = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(n_v))));
    if (n_v == 0 || cells * cells != n_v) throw std::invalid_argument("grid_pool: n_v must be a perfect square");
    if (side * side != x.rows || side % cells != 0)
        throw std::invalid_argument("grid_pool: unsupported n_v " + std::to_string(n_v) + " for " +
                                    std::to_string(x.rows) + " patches");
    const std::size_t stride = side / cells;
    Matrix out(n_v, x.cols);
    const double inv = 1.0 / static_cast<double>(stride * stride);
    for (std::size_t gr = 0; gr < cells; ++gr)
        for (std::size_t gc = 0; gc < cells; ++gc) {
            auto o = out.row(gr * cells + gc);
            for (std::size_t r = gr * stride; r < (gr + 1) * stride; ++r)
                for (std::size_t c = gc * stride; c < (gc + 1) * stride; ++c) {
                    auto in = x.row(r * side + c);
                    for (std::size_t k = 0; k < x.cols; ++k) o[k] += in[k];
                }
            for (auto& v : o) v *= inv;
        }
    return out;
}

inline Matrix grid_pool(const FrameFeatures& x, std::size_t n_v) {
    if (!supported_token_count(n_v)) throw std::invalid_argument("grid_pool: unsupported n_v " + std::to_string(n_v));
    return grid_pool(x.data, n_v);
}

struct ObservationTokens {
    std::vector<double> queried;  // E^Q, length C
    Matrix agnostic;              // E^V, n_v x C

    std::size_t n_v() const { return agnostic.rows; }
};

inline ObservationTokens encode_frame(const FrameFeatures& x, const InstructionEmbedding& instr, std::size_t n_v,
                                      const EncoderParams& params) {
    ObservationTokens t;
    t.queried = instruction_queried_token(x, generate_queries(x, instr, params), params);
    t.agnostic = matmul(grid_pool(x, n_v), params.proj_visual);
    return t;
}

}  // namespace navsim
