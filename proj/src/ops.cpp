#include "umie/ops.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace umie {

namespace {

bool track(std::initializer_list<const Tensor*> ins) {
  if (!grad_enabled()) return false;
  for (const Tensor* t : ins) {
    if (t->requires_grad) return true;
  }
  return false;
}

std::vector<double>& gbuf(Tensor& t) {
  t.ensure_grad();
  return *t.grad;
}

void attach(Tensor& out, std::vector<Tensor> parents,
            std::function<void(const std::vector<double>&)> bwd) {
  out.requires_grad = true;
  out.ensure_grad();  // before consumers capture copies of this handle
  out.node = std::make_shared<Node>();
  out.node->parents = std::move(parents);
  out.node->backward = std::move(bwd);
}

[[noreturn]] void dim_error(const char* op, const Tensor& a, const Tensor& b) {
  throw std::runtime_error(std::string(op) + ": dimension mismatch " + shape_str(a.shape) +
                           " vs " + shape_str(b.shape));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  const int n = a.rows(), k = a.cols(), m = b.cols();
  if (b.rows() != k) dim_error("matmul", a, b);
  Tensor out = Tensor::zeros({n, m});
  const double* pa = a.data->data();
  const double* pb = b.data->data();
  double* po = out.data->data();
  for (int i = 0; i < n; ++i) {
    for (int kk = 0; kk < k; ++kk) {
      const double av = pa[i * k + kk];
      if (av == 0.0) continue;
      const double* pbr = pb + static_cast<std::size_t>(kk) * m;
      double* por = po + static_cast<std::size_t>(i) * m;
      for (int j = 0; j < m; ++j) por[j] += av * pbr[j];
    }
  }
  if (track({&a, &b})) {
    Tensor pa_t = a, pb_t = b;
    attach(out, {a, b}, [pa_t, pb_t, n, k, m](const std::vector<double>& og) mutable {
      if (pa_t.requires_grad) {
        std::vector<double>& ga = gbuf(pa_t);
        const double* bd = pb_t.data->data();
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < m; ++j) {
            const double g = og[static_cast<std::size_t>(i) * m + j];
            if (g == 0.0) continue;
            for (int kk = 0; kk < k; ++kk)
              ga[static_cast<std::size_t>(i) * k + kk] += g * bd[static_cast<std::size_t>(kk) * m + j];
          }
      }
      if (pb_t.requires_grad) {
        std::vector<double>& gb = gbuf(pb_t);
        const double* ad = pa_t.data->data();
        for (int i = 0; i < n; ++i)
          for (int kk = 0; kk < k; ++kk) {
            const double av = ad[static_cast<std::size_t>(i) * k + kk];
            if (av == 0.0) continue;
            for (int j = 0; j < m; ++j)
              gb[static_cast<std::size_t>(kk) * m + j] += av * og[static_cast<std::size_t>(i) * m + j];
          }
      }
    });
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  const int n = a.rows(), m = a.cols();
  Tensor out = Tensor::zeros({m, n});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) out.at(j, i) = a.at(i, j);
  if (track({&a})) {
    Tensor pa = a;
    attach(out, {a}, [pa, n, m](const std::vector<double>& og) mutable {
      if (!pa.requires_grad) return;
      std::vector<double>& ga = gbuf(pa);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) ga[static_cast<std::size_t>(i) * m + j] += og[static_cast<std::size_t>(j) * n + i];
    });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape) dim_error("add", a, b);
  Tensor out = Tensor::zeros(a.shape);
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = (*a.data)[i] + (*b.data)[i];
  if (track({&a, &b})) {
    Tensor pa = a, pb = b;
    attach(out, {a, b}, [pa, pb, n](const std::vector<double>& og) mutable {
      if (pa.requires_grad) {
        std::vector<double>& ga = gbuf(pa);
        for (std::size_t i = 0; i < n; ++i) ga[i] += og[i];
      }
      if (pb.requires_grad) {
        std::vector<double>& gb = gbuf(pb);
        for (std::size_t i = 0; i < n; ++i) gb[i] += og[i];
      }
    });
  }
  return out;
}

Tensor add_row(const Tensor& x, const Tensor& bias) {
  const int n = x.rows(), d = x.cols();
  if (bias.rows() != 1 || bias.cols() != d) dim_error("add_row", x, bias);
  Tensor out = Tensor::zeros({n, d});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) out.at(i, j) = x.at(i, j) + bias.at(0, j);
  if (track({&x, &bias})) {
    Tensor px = x, pb = bias;
    attach(out, {x, bias}, [px, pb, n, d](const std::vector<double>& og) mutable {
      if (px.requires_grad) {
        std::vector<double>& gx = gbuf(px);
        for (std::size_t i = 0; i < static_cast<std::size_t>(n) * d; ++i) gx[i] += og[i];
      }
      if (pb.requires_grad) {
        std::vector<double>& gb = gbuf(pb);
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < d; ++j) gb[j] += og[static_cast<std::size_t>(i) * d + j];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& a, double c) {
  Tensor out = Tensor::zeros(a.shape);
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = c * (*a.data)[i];
  if (track({&a})) {
    Tensor pa = a;
    attach(out, {a}, [pa, c, n](const std::vector<double>& og) mutable {
      if (!pa.requires_grad) return;
      std::vector<double>& ga = gbuf(pa);
      for (std::size_t i = 0; i < n; ++i) ga[i] += c * og[i];
    });
  }
  return out;
}

Tensor scale_by(const Tensor& a, const Tensor& s) {
  if (s.numel() != 1) throw std::runtime_error("scale_by: scale must be scalar, got " + shape_str(s.shape));
  const double sv = (*s.data)[0];
  Tensor out = Tensor::zeros(a.shape);
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = sv * (*a.data)[i];
  if (track({&a, &s})) {
    Tensor pa = a, ps = s;
    attach(out, {a, s}, [pa, ps, sv, n](const std::vector<double>& og) mutable {
      if (pa.requires_grad) {
        std::vector<double>& ga = gbuf(pa);
        for (std::size_t i = 0; i < n; ++i) ga[i] += sv * og[i];
      }
      if (ps.requires_grad) {
        std::vector<double>& gs = gbuf(ps);
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += og[i] * (*pa.data)[i];
        gs[0] += acc;
      }
    });
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  return add_row(matmul(x, w), b);
}

Tensor softmax_rows(const Tensor& x, const std::vector<uint8_t>* keep) {
  const int n = x.rows(), m = x.cols();
  if (m < 1) throw std::runtime_error("softmax_rows: empty rows");
  if (keep && keep->size() != x.numel()) {
    throw std::runtime_error("softmax_rows: mask size " + std::to_string(keep->size()) +
                             " vs tensor " + shape_str(x.shape));
  }
  Tensor out = Tensor::zeros({n, m});
  for (int i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < m; ++j) {
      if (keep && !(*keep)[static_cast<std::size_t>(i) * m + j]) continue;
      mx = std::max(mx, x.at(i, j));
    }
    if (mx == -std::numeric_limits<double>::infinity()) {
      throw std::runtime_error("softmax_rows: row " + std::to_string(i) + " fully masked");
    }
    double sum = 0.0;
    for (int j = 0; j < m; ++j) {
      if (keep && !(*keep)[static_cast<std::size_t>(i) * m + j]) continue;
      double e = std::exp(x.at(i, j) - mx);
      out.at(i, j) = e;
      sum += e;
    }
    for (int j = 0; j < m; ++j) out.at(i, j) /= sum;
  }
  if (track({&x})) {
    Tensor px = x;
    auto pdata = out.data;  // softmax values, needed for the Jacobian
    attach(out, {x}, [px, pdata, n, m](const std::vector<double>& og) mutable {
      if (!px.requires_grad) return;
      std::vector<double>& gx = gbuf(px);
      for (int i = 0; i < n; ++i) {
        double dot = 0.0;
        for (int j = 0; j < m; ++j)
          dot += og[static_cast<std::size_t>(i) * m + j] * (*pdata)[static_cast<std::size_t>(i) * m + j];
        for (int j = 0; j < m; ++j) {
          const std::size_t idx = static_cast<std::size_t>(i) * m + j;
          gx[idx] += (*pdata)[idx] * (og[idx] - dot);
        }
      }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const int n = x.rows(), d = x.cols();
  if (eps < 0) throw std::runtime_error("layer_norm: eps must be >= 0");
  if (gain.rows() != 1 || gain.cols() != d) dim_error("layer_norm gain", x, gain);
  if (bias.rows() != 1 || bias.cols() != d) dim_error("layer_norm bias", x, bias);
  Tensor out = Tensor::zeros({n, d});
  std::vector<double> xhat(static_cast<std::size_t>(n) * d);
  std::vector<double> inv_std(n);
  for (int i = 0; i < n; ++i) {
    double mean = 0.0;
    for (int j = 0; j < d; ++j) mean += x.at(i, j);
    mean /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) {
      double c = x.at(i, j) - mean;
      var += c * c;
    }
    var /= d;
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (int j = 0; j < d; ++j) {
      double h = (x.at(i, j) - mean) * inv_std[i];
      xhat[static_cast<std::size_t>(i) * d + j] = h;
      out.at(i, j) = gain.at(0, j) * h + bias.at(0, j);
    }
  }
  if (track({&x, &gain, &bias})) {
    Tensor px = x, pg = gain, pb = bias;
    attach(out, {x, gain, bias},
           [px, pg, pb, xhat = std::move(xhat), inv_std = std::move(inv_std), n,
            d](const std::vector<double>& og) mutable {
             if (pg.requires_grad) {
               std::vector<double>& gg = gbuf(pg);
               for (int i = 0; i < n; ++i)
                 for (int j = 0; j < d; ++j)
                   gg[j] += og[static_cast<std::size_t>(i) * d + j] * xhat[static_cast<std::size_t>(i) * d + j];
             }
             if (pb.requires_grad) {
               std::vector<double>& gb = gbuf(pb);
               for (int i = 0; i < n; ++i)
                 for (int j = 0; j < d; ++j) gb[j] += og[static_cast<std::size_t>(i) * d + j];
             }
             if (px.requires_grad) {
               std::vector<double>& gx = gbuf(px);
               for (int i = 0; i < n; ++i) {
                 // dh = og * gain; dx = inv_std * (dh - mean(dh) - xhat*mean(dh*xhat))
                 double mean_dh = 0.0, mean_dh_xhat = 0.0;
                 for (int j = 0; j < d; ++j) {
                   double dh = og[static_cast<std::size_t>(i) * d + j] * pg.at(0, j);
                   mean_dh += dh;
                   mean_dh_xhat += dh * xhat[static_cast<std::size_t>(i) * d + j];
                 }
                 mean_dh /= d;
                 mean_dh_xhat /= d;
                 for (int j = 0; j < d; ++j) {
                   double dh = og[static_cast<std::size_t>(i) * d + j] * pg.at(0, j);
                   gx[static_cast<std::size_t>(i) * d + j] +=
                       inv_std[i] * (dh - mean_dh - xhat[static_cast<std::size_t>(i) * d + j] * mean_dh_xhat);
                 }
               }
             }
           });
  }
  return out;
}

Tensor leaky_relu(const Tensor& x, double slope) {
  if (slope <= 0.0 || slope >= 1.0) throw std::runtime_error("leaky_relu: slope must be in (0,1)");
  Tensor out = Tensor::zeros(x.shape);
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) {
    double v = (*x.data)[i];
    (*out.data)[i] = v >= 0.0 ? v : slope * v;
  }
  if (track({&x})) {
    Tensor px = x;
    attach(out, {x}, [px, slope, n](const std::vector<double>& og) mutable {
      if (!px.requires_grad) return;
      std::vector<double>& gx = gbuf(px);
      for (std::size_t i = 0; i < n; ++i)
        gx[i] += ((*px.data)[i] >= 0.0 ? 1.0 : slope) * og[i];
    });
  }
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape);
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = std::max(0.0, (*x.data)[i]);
  if (track({&x})) {
    Tensor px = x;
    attach(out, {x}, [px, n](const std::vector<double>& og) mutable {
      if (!px.requires_grad) return;
      std::vector<double>& gx = gbuf(px);
      for (std::size_t i = 0; i < n; ++i)
        if ((*px.data)[i] > 0.0) gx[i] += og[i];
    });
  }
  return out;
}

Tensor embed_rows(const Tensor& table, const std::vector<int>& ids) {
  const int v = table.rows(), d = table.cols();
  const int n = static_cast<int>(ids.size());
  if (n == 0) throw std::runtime_error("embed_rows: empty id list");
  for (int id : ids) {
    if (id < 0 || id >= v)
      throw std::runtime_error("embed_rows: id " + std::to_string(id) + " out of range [0," +
                               std::to_string(v) + ")");
  }
  Tensor out = Tensor::zeros({n, d});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) out.at(i, j) = table.at(ids[i], j);
  if (track({&table})) {
    Tensor pt = table;
    attach(out, {table}, [pt, ids, n, d](const std::vector<double>& og) mutable {
      if (!pt.requires_grad) return;
      std::vector<double>& gt = gbuf(pt);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j)
          gt[static_cast<std::size_t>(ids[i]) * d + j] += og[static_cast<std::size_t>(i) * d + j];
    });
  }
  return out;
}

Tensor slice_cols(const Tensor& x, int start, int len) {
  const int n = x.rows(), d = x.cols();
  if (start < 0 || len <= 0 || start + len > d)
    throw std::runtime_error("slice_cols: [" + std::to_string(start) + "," +
                             std::to_string(start + len) + ") out of " + std::to_string(d));
  Tensor out = Tensor::zeros({n, len});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < len; ++j) out.at(i, j) = x.at(i, start + j);
  if (track({&x})) {
    Tensor px = x;
    attach(out, {x}, [px, start, len, n, d](const std::vector<double>& og) mutable {
      if (!px.requires_grad) return;
      std::vector<double>& gx = gbuf(px);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < len; ++j)
          gx[static_cast<std::size_t>(i) * d + start + j] += og[static_cast<std::size_t>(i) * len + j];
    });
  }
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::runtime_error("concat_cols: no parts");
  const int n = parts[0].rows();
  int d = 0;
  for (const Tensor& p : parts) {
    if (p.rows() != n) dim_error("concat_cols", parts[0], p);
    d += p.cols();
  }
  Tensor out = Tensor::zeros({n, d});
  int off = 0;
  for (const Tensor& p : parts) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < p.cols(); ++j) out.at(i, off + j) = p.at(i, j);
    off += p.cols();
  }
  bool any = false;
  for (const Tensor& p : parts) any = any || p.requires_grad;
  if (grad_enabled() && any) {
    std::vector<Tensor> ps = parts;
    attach(out, parts, [ps, n, d](const std::vector<double>& og) mutable {
      int off2 = 0;
      for (Tensor& p : ps) {
        const int pc = p.cols();
        if (p.requires_grad) {
          std::vector<double>& gp = gbuf(p);
          for (int i = 0; i < n; ++i)
            for (int j = 0; j < pc; ++j)
              gp[static_cast<std::size_t>(i) * pc + j] += og[static_cast<std::size_t>(i) * d + off2 + j];
        }
        off2 += pc;
      }
    });
  }
  return out;
}

Tensor mean_rows(const Tensor& x, const std::vector<uint8_t>* row_keep) {
  const int n = x.rows(), d = x.cols();
  if (row_keep && static_cast<int>(row_keep->size()) != n)
    throw std::runtime_error("mean_rows: keep size " + std::to_string(row_keep->size()) +
                             " vs " + std::to_string(n) + " rows");
  int cnt = 0;
  Tensor out = Tensor::zeros({1, d});
  for (int i = 0; i < n; ++i) {
    if (row_keep && !(*row_keep)[i]) continue;
    ++cnt;
    for (int j = 0; j < d; ++j) out.at(0, j) += x.at(i, j);
  }
  if (cnt == 0) throw std::runtime_error("mean_rows: no rows kept");
  for (int j = 0; j < d; ++j) out.at(0, j) /= cnt;
  if (track({&x})) {
    Tensor px = x;
    std::vector<uint8_t> keep_copy;
    if (row_keep) keep_copy = *row_keep;
    attach(out, {x}, [px, keep_copy, cnt, n, d](const std::vector<double>& og) mutable {
      if (!px.requires_grad) return;
      std::vector<double>& gx = gbuf(px);
      for (int i = 0; i < n; ++i) {
        if (!keep_copy.empty() && !keep_copy[i]) continue;
        for (int j = 0; j < d; ++j) gx[static_cast<std::size_t>(i) * d + j] += og[j] / cnt;
      }
    });
  }
  return out;
}

Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            const std::vector<uint8_t>* keep) {
  const int d = q.cols();
  if (k.cols() != d) dim_error("scaled_dot_attention q/k", q, k);
  if (v.rows() != k.rows()) dim_error("scaled_dot_attention k/v", k, v);
  if (keep && keep->size() != static_cast<std::size_t>(q.rows()) * k.rows())
    throw std::runtime_error("scaled_dot_attention: mask size " + std::to_string(keep->size()) +
                             " vs " + std::to_string(q.rows()) + "x" + std::to_string(k.rows()));
  Tensor scores = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(d)));
  Tensor weights = softmax_rows(scores, keep);
  return matmul(weights, v);
}

Tensor cross_entropy_label_smoothed(const Tensor& logits, const std::vector<int>& targets,
                                    double eps_ls, int pad_id) {
  const int n = logits.rows(), vsz = logits.cols();
  if (eps_ls < 0.0 || eps_ls >= 1.0) throw std::runtime_error("cross_entropy: eps_ls must be in [0,1)");
  if (static_cast<int>(targets.size()) != n)
    throw std::runtime_error("cross_entropy: " + std::to_string(targets.size()) +
                             " targets for " + std::to_string(n) + " rows");
  int n_active = 0;
  for (int t : targets) {
    if (t == pad_id) continue;
    if (t < 0 || t >= vsz)
      throw std::runtime_error("cross_entropy: target id " + std::to_string(t) +
                               " out of range [0," + std::to_string(vsz) + ")");
    ++n_active;
  }
  if (n_active == 0) throw std::runtime_error("cross_entropy: all positions are pad");

  // log-softmax per active row
  std::vector<double> logp(static_cast<std::size_t>(n) * vsz, 0.0);
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    if (targets[i] == pad_id) continue;
    double mx = logits.at(i, 0);
    for (int j = 1; j < vsz; ++j) mx = std::max(mx, logits.at(i, j));
    double sum = 0.0;
    for (int j = 0; j < vsz; ++j) sum += std::exp(logits.at(i, j) - mx);
    const double lse = mx + std::log(sum);
    double row_loss = 0.0;
    for (int j = 0; j < vsz; ++j) {
      const double lp = logits.at(i, j) - lse;
      logp[static_cast<std::size_t>(i) * vsz + j] = lp;
      const double qv = (j == targets[i] ? 1.0 - eps_ls : 0.0) + eps_ls / vsz;
      row_loss -= qv * lp;
    }
    loss += row_loss;
  }
  loss /= n_active;

  Tensor out = Tensor::scalar(loss);
  if (track({&logits})) {
    Tensor pl = logits;
    attach(out, {logits},
           [pl, targets, logp = std::move(logp), eps_ls, pad_id, n, vsz,
            n_active](const std::vector<double>& og) mutable {
             if (!pl.requires_grad) return;
             std::vector<double>& gl = gbuf(pl);
             const double go = og[0] / n_active;
             for (int i = 0; i < n; ++i) {
               if (targets[i] == pad_id) continue;
               for (int j = 0; j < vsz; ++j) {
                 const double p = std::exp(logp[static_cast<std::size_t>(i) * vsz + j]);
                 const double qv = (j == targets[i] ? 1.0 - eps_ls : 0.0) + eps_ls / vsz;
                 gl[static_cast<std::size_t>(i) * vsz + j] += go * (p - qv);
               }
             }
           });
  }
  return out;
}

}  // namespace umie
