#include "tahcd/train.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>

#include "tahcd/assa.hpp"
#include "tahcd/errors.hpp"
#include "tahcd/rng.hpp"

namespace tahcd {

EpochContext make_epoch_context(const TahcdModel& model, const std::vector<Matrix>& x_full) {
  EpochContext ctx;
  std::vector<Matrix> h;
  for (int m = 0; m < model.num_modalities(); ++m) {
    Matrix z = forward(model.encoders[std::size_t(m)], x_full[std::size_t(m)]);
    if (model.cfg.use_assa) {
      SymEigen sub = build_subspace(z, model.cfg.ridge_scale);
      Matrix mask_row = forward(model.mask_nets[std::size_t(m)], mask_input(sub.eigenvalues));
      Vec w(mask_row.data.begin(), mask_row.data.end());
      h.push_back(filter_features(z, sub.basis, w));
      ctx.subspaces.push_back(std::move(sub));
    } else {
      h.push_back(std::move(z));
    }
  }
  if (model.cfg.use_saca)
    ctx.priors = Priors::estimate(h, model.cfg.ridge_scale, model.cfg.ridge_floor);
  return ctx;
}

FrozenBatch freeze_batch(const TahcdModel& model, std::vector<Matrix> x, std::vector<int> labels,
                         const EpochContext& ctx, const TrainConfig& cfg) {
  FrozenBatch fb;
  fb.x = std::move(x);
  fb.labels = std::move(labels);
  int mm = model.num_modalities();
  int n = fb.x[0].rows;
  int d = model.cfg.latent_dim;

  std::vector<Matrix> h;
  for (int m = 0; m < mm; ++m) {
    Matrix z = forward(model.encoders[std::size_t(m)], fb.x[std::size_t(m)]);
    if (model.cfg.use_assa) {
      const SymEigen& sub = ctx.subspaces[std::size_t(m)];
      fb.bases.push_back(sub.basis);
      fb.mask_inputs.push_back(sub.eigenvalues);
      Matrix mask_row = forward(model.mask_nets[std::size_t(m)], mask_input(sub.eigenvalues));
      Vec w(mask_row.data.begin(), mask_row.data.end());
      h.push_back(filter_features(z, sub.basis, w));
    } else {
      h.push_back(std::move(z));
    }
  }

  if (model.cfg.use_saca) {
    fb.priors = ctx.priors;
    std::vector<Matrix> hs, hc;
    for (int m = 0; m < mm; ++m) {
      ExpertSplit es = expert_split(model.experts_s[std::size_t(m)], h[std::size_t(m)]);
      ExpertSplit ec = expert_split(model.experts_c[std::size_t(m)], h[std::size_t(m)]);
      hs.push_back(std::move(es.kept));
      hc.push_back(std::move(ec.kept));
      fb.ns_bar.push_back(std::move(es.removed));
      fb.nc_bar.push_back(std::move(ec.removed));
    }
    fb.h_expert_in = h;
    fb.neg_conf = neg_confidence(h, ctx.priors);

    for (int m = 0; m < mm; ++m) {
      fb.delta_s.emplace_back(n, d);
      fb.delta_c.emplace_back(n, d);
    }
    if (cfg.use_ttce && cfg.fuse_enhanced && cfg.ttce_train_iterations > 0) {
      TtceState st;
      st.h = h;
      st.hs = hs;
      st.hc = hc;
      st.ns = fb.ns_bar;
      st.nc = fb.nc_bar;
      st.priors = ctx.priors;
      TtceConfig tcfg = cfg.ttce;
      tcfg.validate_psd = false;  // checked on the evaluation path, skipped for speed here
      ttce_iterate(model, st, fb.x, tcfg, cfg.ttce_train_iterations, nullptr,
                   /*with_trace=*/false);
      for (int m = 0; m < mm; ++m) {
        fb.delta_s[std::size_t(m)] = sub(st.hs[std::size_t(m)], hs[std::size_t(m)]);
        fb.delta_c[std::size_t(m)] = sub(st.hc[std::size_t(m)], hc[std::size_t(m)]);
      }
      fb.fusion_weights = confidence_fuse(st.hs, st.hc, st.priors).weights;
    } else {
      fb.fusion_weights = confidence_fuse(hs, hc, ctx.priors).weights;
    }
  }
  return fb;
}

namespace {

struct ForwardPieces {
  std::vector<Matrix> z, proj, h;
  std::vector<Vec> mask;                 // spectral masks
  std::vector<Matrix> ws, wc, hs, hc;    // expert masks and kept features
  std::vector<Matrix> hs_nll, hc_nll;    // streams on detached h: the NLL
                                         // losses shape the experts only,
                                         // never the encoders
  Matrix fused;
  std::vector<Tape> t_enc, t_mask, t_s, t_c, t_dec;
  std::vector<Matrix> recon_residual;
};

ForwardPieces forward_batch(const TahcdModel& model, const FrozenBatch& fb, bool with_tapes,
                            const TrainConfig& cfg, LossBreakdown& bd) {
  int mm = model.num_modalities();
  int n = fb.x[0].rows;
  ForwardPieces fp;
  if (with_tapes) {
    fp.t_enc.resize(static_cast<std::size_t>(mm));
    fp.t_mask.resize(static_cast<std::size_t>(mm));
    fp.t_s.resize(static_cast<std::size_t>(mm));
    fp.t_c.resize(static_cast<std::size_t>(mm));
    fp.t_dec.resize(static_cast<std::size_t>(mm));
  }

  for (int m = 0; m < mm; ++m) {
    Matrix z = forward(model.encoders[std::size_t(m)], fb.x[std::size_t(m)],
                       with_tapes ? &fp.t_enc[std::size_t(m)] : nullptr);
    if (model.cfg.use_assa) {
      Matrix lam = mask_input(fb.mask_inputs[std::size_t(m)]);
      Matrix mask_row = forward(model.mask_nets[std::size_t(m)], lam,
                                with_tapes ? &fp.t_mask[std::size_t(m)] : nullptr);
      Vec w(mask_row.data.begin(), mask_row.data.end());
      Matrix p = project(z, fb.bases[std::size_t(m)], w);
      fp.h.push_back(matmul_nt(p, fb.bases[std::size_t(m)]));
      fp.proj.push_back(std::move(p));
      fp.mask.push_back(std::move(w));
    } else {
      fp.h.push_back(z);
    }
    fp.z.push_back(std::move(z));
  }

  if (model.cfg.use_assa && !with_tapes) {  // the gradient path recomputes these with backprop
    bd.l_o = loss_orthogonality(fp.h, fb.labels, model.cfg.num_classes, nullptr);
    bd.l_a = loss_subspace_alignment(fp.proj, nullptr);
    bd.l_assa = bd.l_o + bd.l_a;
  }

  if (model.cfg.use_saca) {
    for (int m = 0; m < mm; ++m) {
      Matrix ws = forward(model.experts_s[std::size_t(m)], fb.h_expert_in[std::size_t(m)],
                          with_tapes ? &fp.t_s[std::size_t(m)] : nullptr);
      Matrix wc = forward(model.experts_c[std::size_t(m)], fb.h_expert_in[std::size_t(m)],
                          with_tapes ? &fp.t_c[std::size_t(m)] : nullptr);
      fp.hs.push_back(hadamard(fp.h[std::size_t(m)], ws));
      fp.hc.push_back(hadamard(fp.h[std::size_t(m)], wc));
      fp.hs_nll.push_back(hadamard(fb.h_expert_in[std::size_t(m)], ws));
      fp.hc_nll.push_back(hadamard(fb.h_expert_in[std::size_t(m)], wc));
      fp.ws.push_back(std::move(ws));
      fp.wc.push_back(std::move(wc));
    }

    for (int m = 0; m < mm; ++m) {
      Matrix input = add(add(fp.h[std::size_t(m)], fb.ns_bar[std::size_t(m)]), fb.nc_bar[std::size_t(m)]);
      Matrix residual = forward(model.decoders[std::size_t(m)], input,
                                with_tapes ? &fp.t_dec[std::size_t(m)] : nullptr);
      sub_inplace(residual, fb.x[std::size_t(m)]);
      bd.l_re += frobenius_sq(residual) / n;
      fp.recon_residual.push_back(std::move(residual));
    }
    bd.l_re /= mm;

    // fuse the (optionally enhanced) streams with the frozen weights
    int d = fp.hs[0].cols;
    fp.fused = Matrix(n, d);
    for (int i = 0; i < n; ++i)
      for (int m = 0; m < mm; ++m) {
        double w_s = fb.fusion_weights(i, m);
        double w_c = fb.fusion_weights(i, mm + m);
        for (int j = 0; j < d; ++j)
          fp.fused(i, j) += w_s * (fp.hs[std::size_t(m)](i, j) + fb.delta_s[std::size_t(m)](i, j)) +
                            w_c * (fp.hc[std::size_t(m)](i, j) + fb.delta_c[std::size_t(m)](i, j));
      }
  } else {
    if (model.cfg.use_assa) {
      // no experts to split out noise, but the backbone still reconstructs:
      // without this the alignment loss can zero the whole subspace for free
      for (int m = 0; m < mm; ++m) {
        Matrix residual = forward(model.decoders[std::size_t(m)], fp.h[std::size_t(m)],
                                  with_tapes ? &fp.t_dec[std::size_t(m)] : nullptr);
        sub_inplace(residual, fb.x[std::size_t(m)]);
        bd.l_re += frobenius_sq(residual) / n;
        fp.recon_residual.push_back(std::move(residual));
      }
      bd.l_re /= mm;
    }
    fp.fused = fp.h[0];
    for (int m = 1; m < mm; ++m) add_inplace(fp.fused, fp.h[std::size_t(m)]);
    scale_inplace(fp.fused, 1.0 / mm);
  }
  (void)cfg;
  return fp;
}

void saca_losses(const FrozenBatch& fb, const TrainConfig& cfg,
                 ForwardPieces& fp, LossBreakdown& bd, bool want_grads,
                 std::vector<Matrix>* d_hs, std::vector<Matrix>* d_hc) {
  SacaLoss sl = loss_saca(fp.hs_nll, fp.hc_nll, fb.priors, want_grads && !cfg.strict_alignment);
  bd.nll_s = sl.nll_s;
  if (cfg.strict_alignment) {
    // keep the modality-specific NLL; swap the cross term for hard cosine alignment
    std::vector<Matrix> d_strict;
    bd.nll_c = loss_strict_alignment(fp.hc_nll, want_grads ? &d_strict : nullptr);
    if (want_grads) {
      SacaLoss sg = loss_saca(fp.hs_nll, fp.hc_nll, fb.priors, true);
      *d_hs = std::move(sg.d_hs);
      *d_hc = std::move(d_strict);
    }
  } else if (want_grads) {
    *d_hs = std::move(sl.d_hs);
    *d_hc = std::move(sl.d_hc);
  }
  if (!cfg.strict_alignment) bd.nll_c = sl.nll_c;
  bd.l_saca = bd.nll_s + bd.nll_c;
}

}  // namespace

LossBreakdown batch_loss(const TahcdModel& model, const FrozenBatch& fb, const TrainConfig& cfg) {
  LossBreakdown bd;
  ForwardPieces fp = forward_batch(model, fb, /*with_tapes=*/false, cfg, bd);
  if (model.cfg.use_saca) saca_losses(fb, cfg, fp, bd, false, nullptr, nullptr);

  Matrix logits = forward(model.classifier, fp.fused);
  bd.l_cls = loss_cross_entropy(logits, fb.labels, nullptr);
  for (int i = 0; i < logits.rows; ++i) {
    int arg = 0;
    for (int j = 1; j < logits.cols; ++j)
      if (logits(i, j) > logits(i, arg)) arg = j;
    if (arg == fb.labels[std::size_t(i)]) ++bd.correct;
  }
  bd.l_tot = loss_total(bd.l_assa, bd.l_saca, bd.l_re, bd.l_cls);
  return bd;
}

ModelGrads batch_gradients(const TahcdModel& model, const FrozenBatch& fb, const TrainConfig& cfg,
                           GuidanceMode mode, LossBreakdown* breakdown) {
  int mm = model.num_modalities();
  int n = fb.x[0].rows;
  LossBreakdown bd;
  ForwardPieces fp = forward_batch(model, fb, /*with_tapes=*/true, cfg, bd);

  ModelGrads g;
  g.encoders.resize(static_cast<std::size_t>(mm));
  g.mask_nets.resize(static_cast<std::size_t>(mm));
  g.experts_s.resize(static_cast<std::size_t>(mm));
  g.experts_c.resize(static_cast<std::size_t>(mm));
  g.decoders.resize(static_cast<std::size_t>(mm));

  std::vector<Matrix> dh;  // accumulated dL/dh per modality
  for (int m = 0; m < mm; ++m) dh.emplace_back(n, fp.h[0].cols);

  // orthogonality + alignment
  std::vector<Matrix> dp;
  if (model.cfg.use_assa) {
    std::vector<Matrix> dh_lo;
    bd.l_o = loss_orthogonality(fp.h, fb.labels, model.cfg.num_classes, &dh_lo);
    bd.l_a = loss_subspace_alignment(fp.proj, &dp);
    bd.l_assa = bd.l_o + bd.l_a;
    for (int m = 0; m < mm; ++m) add_inplace(dh[std::size_t(m)], dh_lo[std::size_t(m)]);
  }

  // classifier
  Tape t_cls;
  Matrix logits = forward(model.classifier, fp.fused, &t_cls);
  Matrix dlogits;
  bd.l_cls = loss_cross_entropy(logits, fb.labels, &dlogits);
  for (int i = 0; i < logits.rows; ++i) {
    int arg = 0;
    for (int j = 1; j < logits.cols; ++j)
      if (logits(i, j) > logits(i, arg)) arg = j;
    if (arg == fb.labels[std::size_t(i)]) ++bd.correct;
  }
  g.classifier = backward(model.classifier, t_cls, dlogits);
  Matrix df = std::move(g.classifier.dinput);

  if (model.cfg.use_saca) {
    std::vector<Matrix> d_hs, d_hc;
    saca_losses(fb, cfg, fp, bd, true, &d_hs, &d_hc);

    for (int m = 0; m < mm; ++m) {
      // stream contributions of the classification loss (weights frozen)
      Matrix dhs_cls(n, df.cols), dhc_cls(n, df.cols);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < df.cols; ++j) {
          dhs_cls(i, j) = df(i, j) * fb.fusion_weights(i, m);
          dhc_cls(i, j) = df(i, j) * fb.fusion_weights(i, mm + m);
        }

      // modality-specific expert: NLL lands on the expert via the detached
      // stream; only the classification path reaches the encoder
      add_inplace(dh[std::size_t(m)], hadamard(dhs_cls, fp.ws[std::size_t(m)]));
      Matrix dws = add(hadamard(d_hs[std::size_t(m)], fb.h_expert_in[std::size_t(m)]),
                       hadamard(dhs_cls, fp.h[std::size_t(m)]));
      g.experts_s[std::size_t(m)] = backward(model.experts_s[std::size_t(m)], fp.t_s[std::size_t(m)], dws);

      // cross-modality expert: the NLL part may be confidence-weighted
      add_inplace(dh[std::size_t(m)], hadamard(dhc_cls, fp.wc[std::size_t(m)]));
      Matrix dwc_nll = hadamard(d_hc[std::size_t(m)], fb.h_expert_in[std::size_t(m)]);
      Matrix dwc_cls = hadamard(dhc_cls, fp.h[std::size_t(m)]);
      if (mode == GuidanceMode::Exact) {
        g.experts_c[std::size_t(m)] =
            backward(model.experts_c[std::size_t(m)], fp.t_c[std::size_t(m)], add(dwc_nll, dwc_cls));
      } else {
        Vec scale(static_cast<std::size_t>(n), 1.0 / mm);
        if (mode == GuidanceMode::Confidence)
          for (int i = 0; i < n; ++i) scale[std::size_t(i)] = fb.neg_conf(i, m);
        g.experts_c[std::size_t(m)] =
            backward_weighted(model.experts_c[std::size_t(m)], fp.t_c[std::size_t(m)], dwc_nll, scale);
        accumulate(g.experts_c[std::size_t(m)],
                   backward(model.experts_c[std::size_t(m)], fp.t_c[std::size_t(m)], dwc_cls));
      }

      // reconstruction: residual feeds the decoder, input gradient lands on h
      Matrix dres = fp.recon_residual[std::size_t(m)];
      scale_inplace(dres, 2.0 / (double(mm) * n));
      g.decoders[std::size_t(m)] = backward(model.decoders[std::size_t(m)], fp.t_dec[std::size_t(m)], dres);
      add_inplace(dh[std::size_t(m)], g.decoders[std::size_t(m)].dinput);
    }
  } else {
    for (int m = 0; m < mm; ++m) {
      axpy_inplace(dh[std::size_t(m)], 1.0 / mm, df);
      if (model.cfg.use_assa) {
        Matrix dres = fp.recon_residual[std::size_t(m)];
        scale_inplace(dres, 2.0 / (double(mm) * n));
        g.decoders[std::size_t(m)] =
            backward(model.decoders[std::size_t(m)], fp.t_dec[std::size_t(m)], dres);
        add_inplace(dh[std::size_t(m)], g.decoders[std::size_t(m)].dinput);
      }
    }
  }

  for (int m = 0; m < mm; ++m) {
    if (model.cfg.use_assa) {
      Matrix dz(n, fp.z[std::size_t(m)].cols);
      Vec dw(fp.mask[std::size_t(m)].size(), 0.0);
      filter_backward(fp.z[std::size_t(m)], fb.bases[std::size_t(m)], fp.mask[std::size_t(m)],
                      dh[std::size_t(m)], dz, dw);
      project_backward(fp.z[std::size_t(m)], fb.bases[std::size_t(m)], fp.mask[std::size_t(m)],
                       dp[std::size_t(m)], dz, dw);
      Matrix dw_row(1, int(dw.size()));
      for (int j = 0; j < dw_row.cols; ++j) dw_row(0, j) = dw[std::size_t(j)];
      g.mask_nets[std::size_t(m)] =
          backward(model.mask_nets[std::size_t(m)], fp.t_mask[std::size_t(m)], dw_row);
      g.encoders[std::size_t(m)] = backward(model.encoders[std::size_t(m)], fp.t_enc[std::size_t(m)], dz);
    } else {
      g.encoders[std::size_t(m)] =
          backward(model.encoders[std::size_t(m)], fp.t_enc[std::size_t(m)], dh[std::size_t(m)]);
    }
  }

  bd.l_tot = loss_total(bd.l_assa, bd.l_saca, bd.l_re, bd.l_cls);
  if (breakdown) *breakdown = bd;
  return g;
}

TrainResult train(TahcdModel& model, const MultimodalDataset& data, const TrainConfig& cfg) {
  data.validate();
  if (int(data.modalities.size()) != model.num_modalities())
    throw ConfigError("dataset modality count does not match the model");
  for (int m = 0; m < model.num_modalities(); ++m)
    if (data.modalities[std::size_t(m)].cols != model.cfg.modality_dims[std::size_t(m)])
      throw ConfigError("dataset modality " + std::to_string(m) + " width does not match the model");
  if (data.num_classes != model.cfg.num_classes)
    throw ConfigError("dataset class count does not match the model");
  if (cfg.batch_size < 2) throw ConfigError("batch_size must be at least 2");
  if (cfg.epochs < 1) throw ConfigError("epochs must be at least 1");

  int n = data.num_samples();
  GuidanceMode mode = cfg.confidence_guidance ? GuidanceMode::Confidence : GuidanceMode::Uniform;

  std::vector<AdamState> a_enc, a_mask, a_es, a_ec, a_dec;
  for (int m = 0; m < model.num_modalities(); ++m) {
    a_enc.push_back(AdamState::init(model.encoders[std::size_t(m)], cfg.adam));
    a_mask.push_back(AdamState::init(model.mask_nets[std::size_t(m)], cfg.adam));
    a_es.push_back(AdamState::init(model.experts_s[std::size_t(m)], cfg.adam));
    a_ec.push_back(AdamState::init(model.experts_c[std::size_t(m)], cfg.adam));
    a_dec.push_back(AdamState::init(model.decoders[std::size_t(m)], cfg.adam));
  }
  AdamState a_cls = AdamState::init(model.classifier, cfg.adam);

  Rng shuffle_rng = substream(cfg.seed, "shuffle");
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  TrainResult out;
  TahcdModel snapshot = model;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (auto& a : a_enc) a.set_epoch(epoch);
    for (auto& a : a_mask) a.set_epoch(epoch);
    for (auto& a : a_es) a.set_epoch(epoch);
    for (auto& a : a_ec) a.set_epoch(epoch);
    for (auto& a : a_dec) a.set_epoch(epoch);
    a_cls.set_epoch(epoch);

    EpochContext ctx = make_epoch_context(model, data.modalities);
    shuffle_rng.shuffle(order);

    HistoryRow row;
    row.epoch = epoch;
    int seen = 0, correct = 0;

    try {
      int start = 0;
      while (start < n) {
        int take = std::min(cfg.batch_size, n - start);
        if (n - start - take == 1) ++take;  // avoid a 1-sample tail batch
        std::vector<int> idx(order.begin() + start, order.begin() + start + take);
        start += take;

        MultimodalDataset batch = data.take(idx);
        FrozenBatch fb =
            freeze_batch(model, std::move(batch.modalities), std::move(batch.labels), ctx, cfg);
        LossBreakdown bd;
        ModelGrads g = batch_gradients(model, fb, cfg, mode, &bd);
        if (!std::isfinite(bd.l_tot))
          throw NumericError("training loss became non-finite at epoch " + std::to_string(epoch));

        for (int m = 0; m < model.num_modalities(); ++m) {
          adam_step(a_enc[std::size_t(m)], model.encoders[std::size_t(m)], g.encoders[std::size_t(m)]);
          if (model.cfg.use_assa)
            adam_step(a_mask[std::size_t(m)], model.mask_nets[std::size_t(m)], g.mask_nets[std::size_t(m)]);
          if (model.cfg.use_saca) {
            adam_step(a_es[std::size_t(m)], model.experts_s[std::size_t(m)], g.experts_s[std::size_t(m)]);
            adam_step(a_ec[std::size_t(m)], model.experts_c[std::size_t(m)], g.experts_c[std::size_t(m)]);
          }
          if (model.cfg.use_saca || model.cfg.use_assa)
            adam_step(a_dec[std::size_t(m)], model.decoders[std::size_t(m)], g.decoders[std::size_t(m)]);
        }
        adam_step(a_cls, model.classifier, g.classifier);

        row.l_assa += bd.l_assa * take;
        row.l_o += bd.l_o * take;
        row.l_a += bd.l_a * take;
        row.l_saca += bd.l_saca * take;
        row.nll_s += bd.nll_s * take;
        row.nll_c += bd.nll_c * take;
        row.l_re += bd.l_re * take;
        row.l_cls += bd.l_cls * take;
        correct += bd.correct;
        seen += take;
      }
    } catch (const NumericError& err) {
      model = snapshot;
      throw NumericError(std::string(err.what()) + "; model restored to the end of epoch " +
                         std::to_string(epoch - 1));
    }

    row.l_assa /= seen;
    row.l_o /= seen;
    row.l_a /= seen;
    row.l_saca /= seen;
    row.nll_s /= seen;
    row.nll_c /= seen;
    row.l_re /= seen;
    row.l_cls /= seen;
    row.train_acc = double(correct) / seen;
    out.history.push_back(row);
    snapshot = model;

    if (cfg.verbose)
      std::cerr << "epoch " << epoch << ": l_tot="
                << row.l_assa + row.l_saca + row.l_re + row.l_cls << " acc=" << row.train_acc
                << "\n";
  }
  return out;
}

void write_history_csv(const std::string& path, const std::vector<HistoryRow>& history) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  out << "epoch,l_assa,l_o,l_a,l_saca,l_nll_s,l_nll_c,l_re,l_cls,train_acc\n";
  out.precision(8);
  for (const HistoryRow& r : history)
    out << r.epoch << ',' << r.l_assa << ',' << r.l_o << ',' << r.l_a << ',' << r.l_saca << ','
        << r.nll_s << ',' << r.nll_c << ',' << r.l_re << ',' << r.l_cls << ',' << r.train_acc
        << '\n';
  if (!out) throw ConfigError("write failed for '" + path + "'");
}

}  // namespace tahcd
