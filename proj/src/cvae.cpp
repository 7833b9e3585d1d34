#include "goalplan/cvae.hpp"

#include <algorithm>
#include <cmath>

#include "goalplan/io.hpp"
#include "json.hpp"

namespace goalplan {
namespace cvae {

CvaeModel CvaeModel::make(int level_index, int delta_t, const std::vector<int>& hidden, Rng& rng,
                          int d_h, int d_z, double beta_kl) {
    if (delta_t <= 0) throw std::invalid_argument("CvaeModel: delta_t must be positive");
    CvaeModel m;
    m.level_index = level_index;
    m.delta_t = delta_t;
    m.d_h = d_h;
    m.d_z = d_z;
    m.beta_kl = beta_kl;
    std::vector<int> enc_sizes{2 * d_h};
    enc_sizes.insert(enc_sizes.end(), hidden.begin(), hidden.end());
    enc_sizes.push_back(2 * d_z);
    std::vector<int> dec_sizes{d_h + d_z};
    dec_sizes.insert(dec_sizes.end(), hidden.begin(), hidden.end());
    dec_sizes.push_back(d_h);
    Rng enc_rng = rng.stream("enc");
    Rng dec_rng = rng.stream("dec");
    m.encoder = Mlp(enc_sizes, enc_rng);
    m.decoder = Mlp(dec_sizes, dec_rng);
    return m;
}

void CvaeModel::save(const std::string& prefix) const {
    encoder.save(prefix + "_enc.bin");
    decoder.save(prefix + "_dec.bin");
    nlohmann::json j;
    j["level_index"] = level_index;
    j["delta_t"] = delta_t;
    j["d_h"] = d_h;
    j["d_z"] = d_z;
    j["beta_kl"] = beta_kl;
    io::write_text(prefix + ".json", j.dump(2) + "\n");
}

CvaeModel CvaeModel::load(const std::string& prefix) {
    nlohmann::json j = nlohmann::json::parse(io::read_text(prefix + ".json"));
    CvaeModel m;
    m.level_index = j.at("level_index").get<int>();
    m.delta_t = j.at("delta_t").get<int>();
    m.d_h = j.at("d_h").get<int>();
    m.d_z = j.at("d_z").get<int>();
    m.beta_kl = j.at("beta_kl").get<double>();
    m.encoder = Mlp::load(prefix + "_enc.bin");
    m.decoder = Mlp::load(prefix + "_dec.bin");
    return m;
}

int offset_min(int delta_t) { return std::max(1L, std::lround(0.75 * delta_t)); }
int offset_max(int delta_t) { return std::max(1L, std::lround(1.25 * delta_t)); }

namespace {

void check_finite(const Mat& m, const char* name) {
    if (!m.allFinite()) throw NumericError(std::string("cvae: non-finite values in ") + name);
}

}  // namespace

ElboParts elbo_batch(const CvaeModel& model, const Mat& context, const Mat& target,
                     const Mat& noise, double row_weight, BatchGrads* grads, Mat* recon_out_states) {
    const Eigen::Index B = context.rows();
    if (target.rows() != B || noise.rows() != B)
        throw std::invalid_argument("elbo_batch: row count mismatch");
    if (context.cols() != model.d_h || target.cols() != model.d_h || noise.cols() != model.d_z)
        throw std::invalid_argument("elbo_batch: dimension mismatch");

    Mat enc_in(B, 2 * model.d_h);
    enc_in << context, target;
    Mlp::Cache enc_cache;
    Mat enc_out = model.encoder.forward(enc_in, grads ? &enc_cache : nullptr);
    Mat mu = enc_out.leftCols(model.d_z);
    Mat logvar_raw = enc_out.rightCols(model.d_z);
    check_finite(mu, "mu");
    check_finite(logvar_raw, "logvar");
    Mat logvar = logvar_raw.cwiseMax(model.logvar_min).cwiseMin(model.logvar_max);

    Mat sigma = (0.5 * logvar.array()).exp().matrix();
    Mat z = mu + sigma.cwiseProduct(noise);
    check_finite(z, "z");

    Mat dec_in(B, model.d_h + model.d_z);
    dec_in << context, z;
    Mlp::Cache dec_cache;
    Mat recon_out = model.decoder.forward(dec_in, grads ? &dec_cache : nullptr);
    check_finite(recon_out, "reconstruction");
    if (recon_out_states) *recon_out_states = recon_out;

    Mat err = recon_out - target;
    double recon = row_weight * err.array().square().sum();
    Eigen::ArrayXXd mu_a = mu.array(), lv_a = logvar.array();
    double kl = row_weight * 0.5 * (mu_a.square() + lv_a.exp() - 1.0 - lv_a).sum();

    if (grads) {
        Mat d_recon_out = 2.0 * row_weight * err;
        Mlp::Grads dg = model.decoder.backward(dec_cache, d_recon_out);
        Mat d_z = dg.input.rightCols(model.d_z);
        // reparameterization: dz/dmu = 1, dz/dlogvar = 0.5 sigma xi = 0.5 (z - mu)
        Mat d_mu = d_z + (model.beta_kl * row_weight) * mu;
        Mat d_logvar = d_z.cwiseProduct(0.5 * (z - mu)) +
                       (model.beta_kl * row_weight * 0.5) * (lv_a.exp() - 1.0).matrix();
        // clamp is flat outside its range
        Mat mask = ((logvar_raw.array() > model.logvar_min) &&
                    (logvar_raw.array() < model.logvar_max))
                       .cast<double>()
                       .matrix();
        d_logvar = d_logvar.cwiseProduct(mask);
        Mat d_enc_out(B, 2 * model.d_z);
        d_enc_out << d_mu, d_logvar;
        Mlp::Grads eg = model.encoder.backward(enc_cache, d_enc_out);

        auto accumulate = [](Mlp::Grads& into, const Mlp::Grads& from) {
            if (into.weights.empty()) {
                into = from;
                return;
            }
            for (std::size_t l = 0; l < from.weights.size(); ++l) {
                into.weights[l] += from.weights[l];
                into.biases[l] += from.biases[l];
            }
        };
        accumulate(grads->dec, dg);
        accumulate(grads->enc, eg);
    }

    ElboParts parts;
    parts.recon = recon;
    parts.kl = kl;
    parts.loss = recon + model.beta_kl * kl;
    return parts;
}

ElboParts elbo_loss(const CvaeModel& model, const TransitionPair& pair, const Vec& noise) {
    if (pair.h_t.size() != model.d_h || pair.h_tau.size() != model.d_h)
        throw std::invalid_argument("elbo_loss: pair dimension mismatch");
    if (noise.size() != model.d_z) throw std::invalid_argument("elbo_loss: noise dimension mismatch");
    return elbo_batch(model, pair.h_t.transpose(), pair.h_tau.transpose(), noise.transpose(), 1.0);
}

ElboParts elbo_loss(const CvaeModel& model, const TransitionPair& pair, Rng& rng) {
    return elbo_loss(model, pair, rng.normal_vec(model.d_z));
}

std::vector<Vec> generate_sequence(const CvaeModel& model, const Vec& h_start,
                                   const std::vector<Vec>& z_seq) {
    std::vector<Vec> out;
    out.reserve(z_seq.size());
    Vec h = h_start;
    for (const Vec& z : z_seq) {
        if (z.size() != model.d_z) throw std::invalid_argument("generate_sequence: bad z dimension");
        Vec in(model.d_h + model.d_z);
        in << h, z;
        h = model.decoder.forward(in);
        out.push_back(h);
    }
    return out;
}

std::vector<Mat> generate_sequence_batch(const CvaeModel& model, const Mat& h_start,
                                         const std::vector<Mat>& z_seq) {
    std::vector<Mat> out;
    out.reserve(z_seq.size());
    Mat h = h_start;
    for (const Mat& z : z_seq) {
        if (z.rows() != h.rows() || z.cols() != model.d_z)
            throw std::invalid_argument("generate_sequence_batch: bad z shape");
        Mat in(h.rows(), model.d_h + model.d_z);
        in << h, z;
        h = model.decoder.forward(in);
        out.push_back(h);
    }
    return out;
}

namespace {

struct HoldoutSet {
    Mat context;
    Mat target;
    Mat noise;
};

HoldoutSet build_holdout(const std::vector<Mat>& trajs, const std::vector<int>& holdout_idx,
                         int delta_t, int d_z, Rng& rng) {
    std::vector<Vec> ctx, tgt;
    const int lo = offset_min(delta_t), hi = offset_max(delta_t);
    for (int ti : holdout_idx) {
        const Mat& m = trajs[static_cast<std::size_t>(ti)];
        int T = static_cast<int>(m.rows()) - 1;
        for (int rep = 0; rep < 4; ++rep) {
            int cap = std::min(hi, T);
            if (cap < lo) continue;
            int delta = lo + static_cast<int>(rng.uniform_int(cap - lo + 1));
            int t = static_cast<int>(rng.uniform_int(T - delta + 1));
            ctx.push_back(m.row(t).transpose());
            tgt.push_back(m.row(t + delta).transpose());
        }
    }
    HoldoutSet h;
    h.context.resize(static_cast<Eigen::Index>(ctx.size()), ctx.empty() ? 0 : ctx[0].size());
    h.target.resize(h.context.rows(), h.context.cols());
    for (std::size_t i = 0; i < ctx.size(); ++i) {
        h.context.row(static_cast<Eigen::Index>(i)) = ctx[i].transpose();
        h.target.row(static_cast<Eigen::Index>(i)) = tgt[i].transpose();
    }
    h.noise = rng.normal_mat(h.context.rows(), d_z);
    return h;
}

}  // namespace

TrainReport train_level(CvaeModel& model, const std::vector<Mat>& traj_latents,
                        const TrainOptions& opts, std::uint64_t seed) {
    // a trajectory must outlast the level's nominal horizon; the largest
    // drawn offsets are capped to the trajectory when needed
    const int min_len = model.delta_t + 1;
    Rng root(seed);
    Rng sample_rng = root.stream("samples");
    Rng noise_rng = root.stream("noise");
    Rng holdout_rng = root.stream("holdout");

    // deterministic split: every k-th trajectory held out
    int stride = opts.holdout_fraction > 0 ? std::max(2, static_cast<int>(std::lround(1.0 / opts.holdout_fraction)))
                                           : 0;
    std::vector<int> train_idx, holdout_idx;
    for (int i = 0; i < static_cast<int>(traj_latents.size()); ++i) {
        int T = static_cast<int>(traj_latents[static_cast<std::size_t>(i)].rows()) - 1;
        if (T < min_len) continue;
        if (stride > 0 && i % stride == stride - 1)
            holdout_idx.push_back(i);
        else
            train_idx.push_back(i);
    }
    if (train_idx.empty())
        throw ConfigError("train_level: no trajectory long enough for level " +
                          std::to_string(model.level_index) + " (delta_t=" +
                          std::to_string(model.delta_t) + ")");
    if (holdout_idx.empty()) holdout_idx.push_back(train_idx.front());

    HoldoutSet holdout = build_holdout(traj_latents, holdout_idx, model.delta_t, model.d_z, holdout_rng);
    auto eval_holdout = [&]() -> ElboParts {
        if (holdout.context.rows() == 0) return {};
        return elbo_batch(model, holdout.context, holdout.target, holdout.noise,
                          1.0 / static_cast<double>(holdout.context.rows()));
    };

    TrainReport report;
    report.eligible_trajectories = static_cast<int>(train_idx.size() + holdout_idx.size());
    {
        ElboParts e0 = eval_holdout();
        report.holdout_elbo.push_back(e0.loss);
        report.holdout_recon.push_back(e0.recon);
    }
    if (opts.epochs <= 0) return report;

    long anchor_capacity = 0;
    for (int ti : train_idx) {
        long T = traj_latents[static_cast<std::size_t>(ti)].rows() - 1;
        anchor_capacity += std::max(1L, T - model.delta_t + 1);
    }
    const int batches_per_epoch =
        static_cast<int>(std::max(1L, (anchor_capacity + opts.batch_size - 1) / opts.batch_size));

    AdamState enc_opt = AdamState::init(model.encoder, {opts.lr});
    AdamState dec_opt = AdamState::init(model.decoder, {opts.lr});

    const int lo = offset_min(model.delta_t), hi = offset_max(model.delta_t);

    for (int epoch = 1; epoch <= opts.epochs; ++epoch) {
        for (int batch = 0; batch < batches_per_epoch; ++batch) {
            // draw anchors and per-link offsets
            struct Sample {
                const Mat* traj;
                int t;
                std::vector<int> offsets;  // truncated at the trajectory end
            };
            std::vector<Sample> samples;
            samples.reserve(static_cast<std::size_t>(opts.batch_size));
            int total_links = 0;
            for (int i = 0; i < opts.batch_size; ++i) {
                Sample smp;
                int ti = train_idx[static_cast<std::size_t>(sample_rng.uniform_int(
                    static_cast<std::int64_t>(train_idx.size())))];
                smp.traj = &traj_latents[static_cast<std::size_t>(ti)];
                int T = static_cast<int>(smp.traj->rows()) - 1;
                std::vector<int> draws(static_cast<std::size_t>(opts.chain_length));
                for (auto& d : draws) d = lo + static_cast<int>(sample_rng.uniform_int(hi - lo + 1));
                if (draws[0] > T) draws[0] = lo + static_cast<int>(sample_rng.uniform_int(T - lo + 1));
                smp.t = static_cast<int>(sample_rng.uniform_int(T - draws[0] + 1));
                int reach = smp.t;
                for (int d : draws) {
                    if (reach + d > T) break;
                    reach += d;
                    smp.offsets.push_back(d);
                }
                total_links += static_cast<int>(smp.offsets.size());
                samples.push_back(smp);
            }

            BatchGrads grads;
            double w = 1.0 / static_cast<double>(total_links);
            ElboParts batch_parts;

            // link 1 context is data; later links reuse the previous
            // reconstruction with gradients stopped
            std::vector<int> active(samples.size());
            for (std::size_t i = 0; i < samples.size(); ++i) active[i] = static_cast<int>(i);
            Mat context(static_cast<Eigen::Index>(samples.size()), model.d_h);
            std::vector<int> reach(samples.size());
            for (std::size_t i = 0; i < samples.size(); ++i) {
                context.row(static_cast<Eigen::Index>(i)) = samples[i].traj->row(samples[i].t);
                reach[i] = samples[i].t;
            }

            for (int link = 0; !active.empty(); ++link) {
                std::vector<int> next_active;
                Mat ctx(static_cast<Eigen::Index>(active.size()), model.d_h);
                Mat tgt(static_cast<Eigen::Index>(active.size()), model.d_h);
                for (std::size_t r = 0; r < active.size(); ++r) {
                    int i = active[r];
                    ctx.row(static_cast<Eigen::Index>(r)) = context.row(i);
                    reach[static_cast<std::size_t>(i)] += samples[static_cast<std::size_t>(i)].offsets[static_cast<std::size_t>(link)];
                    tgt.row(static_cast<Eigen::Index>(r)) =
                        samples[static_cast<std::size_t>(i)].traj->row(reach[static_cast<std::size_t>(i)]);
                }
                Mat noise = noise_rng.normal_mat(ctx.rows(), model.d_z);

                Mat recon;  // next link's context (stop-gradient)
                ElboParts parts = elbo_batch(model, ctx, tgt, noise, w, &grads, &recon);
                batch_parts.loss += parts.loss;
                batch_parts.recon += parts.recon;
                batch_parts.kl += parts.kl;

                for (std::size_t r = 0; r < active.size(); ++r) {
                    int i = active[r];
                    const auto& offs = samples[static_cast<std::size_t>(i)].offsets;
                    if (link + 1 < static_cast<int>(offs.size())) {
                        context.row(i) = recon.row(static_cast<Eigen::Index>(r));
                        next_active.push_back(i);
                    }
                }
                active = std::move(next_active);
            }

            if (!std::isfinite(batch_parts.loss))
                throw NumericError("train_level: non-finite batch loss at level " +
                                   std::to_string(model.level_index));
            adam_step(model.encoder, grads.enc, enc_opt);
            adam_step(model.decoder, grads.dec, dec_opt);
        }

        ElboParts e = eval_holdout();
        report.holdout_elbo.push_back(e.loss);
        report.holdout_recon.push_back(e.recon);
    }
    return report;
}

}  // namespace cvae
}  // namespace goalplan
