#pragma once

#include <cstdint>
#include <vector>

#include "umie/tensor.hpp"

namespace umie {

// All kernels record backward closures when grad is enabled and any input
// requires a gradient. Masks are keep-flags (1 = attend / include).

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
// x[n,d] + bias broadcast over rows; bias is {1,d}.
Tensor add_row(const Tensor& x, const Tensor& bias);
Tensor scale(const Tensor& a, double c);
// out = s * a with scalar tensor s ({1,1}); grads flow to both.
Tensor scale_by(const Tensor& a, const Tensor& s);

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// Row softmax with max-subtraction. keep, when given, has x.numel() flags;
// masked positions get exactly zero weight. A fully masked row is an error.
Tensor softmax_rows(const Tensor& x, const std::vector<uint8_t>* keep = nullptr);

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);
Tensor leaky_relu(const Tensor& x, double slope);
Tensor relu(const Tensor& x);

// out[i] = table[ids[i]]; grads scatter-add into the table.
Tensor embed_rows(const Tensor& table, const std::vector<int>& ids);

Tensor slice_cols(const Tensor& x, int start, int len);
Tensor concat_cols(const std::vector<Tensor>& parts);

// Mean over rows -> {1,d}. row_keep, when given, has x.rows() flags and
// excluded rows contribute nothing; zero kept rows is an error.
Tensor mean_rows(const Tensor& x, const std::vector<uint8_t>* row_keep = nullptr);

// softmax(Q K^T / sqrt(d)) V with optional [n x m] keep mask.
Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            const std::vector<uint8_t>* keep = nullptr);

// Mean over non-pad positions of -sum_v q(v) log p(v) with
// q = (1-eps)*onehot + eps/|V|. Returns a {1,1} tensor.
Tensor cross_entropy_label_smoothed(const Tensor& logits, const std::vector<int>& targets,
                                    double eps_ls, int pad_id);

}  // namespace umie
