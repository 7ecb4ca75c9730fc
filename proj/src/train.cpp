#include "faceanim/train.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "faceanim/kernels.hpp"

namespace faceanim::train {

using world::DatasetManifest;
using world::PixelCache;

// ----------------------------------------------------------------- config

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

void TrainConfig::set(const std::string& key, const std::string& value) {
    auto as_int = [&] { return std::stoi(value); };
    auto as_u64 = [&] { return static_cast<uint64_t>(std::stoull(value)); };
    auto as_double = [&] { return std::stod(value); };
    if (key == "stage") stage = as_int();
    else if (key == "dataset_dir") dataset_dir = value;
    else if (key == "out_checkpoint") out_checkpoint = value;
    else if (key == "init_checkpoint") init_checkpoint = value;
    else if (key == "learning_rate") learning_rate = as_double();
    else if (key == "batch_size") batch_size = as_int();
    else if (key == "steps") steps = as_int();
    else if (key == "clip_length") clip_length = as_int();
    else if (key == "lambda_id") lambda_id = as_double();
    else if (key == "cond_dropout_prob") cond_dropout_prob = as_double();
    else if (key == "sigma_cond") sigma_cond = as_double();
    else if (key == "seed") seed = as_u64();
    else if (key == "resolution") resolution = as_int();
    else if (key == "patch_size") patch_size = as_int();
    else if (key == "d_model") d_model = as_int();
    else if (key == "enc_layers") enc_layers = as_int();
    else if (key == "enc_heads") enc_heads = as_int();
    else if (key == "d_k") d_k = as_int();
    else if (key == "width0") width0 = as_int();
    else if (key == "width1") width1 = as_int();
    else if (key == "t_dim") t_dim = as_int();
    else if (key == "temb_hidden") temb_hidden = as_int();
    else if (key == "gn_groups") gn_groups = as_int();
    else if (key == "timesteps") timesteps = as_int();
    else if (key == "bank_capacity") bank_capacity = as_int();
    else if (key == "temperature") temperature = as_double();
    else if (key == "aug_strength") aug_strength = as_double();
    else if (key == "verify_freeze") verify_freeze = as_int();
    else if (key == "log_every") log_every = as_int();
    else if (key == "threads") threads = as_int();
    else throw std::invalid_argument("TrainConfig: unknown key '" + key + "'");
}

std::map<std::string, std::string> TrainConfig::to_map() const {
    std::map<std::string, std::string> m;
    auto put_d = [&](const char* k, double v) {
        std::ostringstream os;
        os.precision(17);
        os << v;
        m[k] = os.str();
    };
    m["stage"] = std::to_string(stage);
    m["dataset_dir"] = dataset_dir;
    m["out_checkpoint"] = out_checkpoint;
    m["init_checkpoint"] = init_checkpoint;
    put_d("learning_rate", learning_rate);
    m["batch_size"] = std::to_string(batch_size);
    m["steps"] = std::to_string(steps);
    m["clip_length"] = std::to_string(clip_length);
    put_d("lambda_id", lambda_id);
    put_d("cond_dropout_prob", cond_dropout_prob);
    put_d("sigma_cond", sigma_cond);
    m["seed"] = std::to_string(seed);
    m["resolution"] = std::to_string(resolution);
    m["patch_size"] = std::to_string(patch_size);
    m["d_model"] = std::to_string(d_model);
    m["enc_layers"] = std::to_string(enc_layers);
    m["enc_heads"] = std::to_string(enc_heads);
    m["d_k"] = std::to_string(d_k);
    m["width0"] = std::to_string(width0);
    m["width1"] = std::to_string(width1);
    m["t_dim"] = std::to_string(t_dim);
    m["temb_hidden"] = std::to_string(temb_hidden);
    m["gn_groups"] = std::to_string(gn_groups);
    m["timesteps"] = std::to_string(timesteps);
    m["bank_capacity"] = std::to_string(bank_capacity);
    put_d("temperature", temperature);
    put_d("aug_strength", aug_strength);
    m["verify_freeze"] = std::to_string(verify_freeze);
    m["log_every"] = std::to_string(log_every);
    m["threads"] = std::to_string(threads);
    return m;
}

TrainConfig TrainConfig::from_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("TrainConfig: cannot open " + path);
    TrainConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("TrainConfig: bad line " + std::to_string(lineno) + " in " +
                                     path);
        cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

void TrainConfig::validate() const {
    require(stage == 1 || stage == 2, "TrainConfig: stage must be 1 or 2");
    require(cond_dropout_prob >= 0.0 && cond_dropout_prob <= 1.0,
            "TrainConfig: cond_dropout_prob must be a probability");
    require(lambda_id >= 0.0, "TrainConfig: lambda_id must be non-negative");
    require(batch_size >= 1 && steps >= 0, "TrainConfig: batch/steps must be positive");
    require(clip_length >= 4, "TrainConfig: clip_length must be >= 4");
    require(sigma_cond >= 0.0, "TrainConfig: sigma_cond must be non-negative");
    if (stage == 2)
        require(!init_checkpoint.empty() || !dataset_dir.empty(),
                "TrainConfig: stage 2 requires an init checkpoint");
}

void TrainConfig::apply_paper_scale() {
    learning_rate = 1e-5;
    steps = 30000;
    batch_size = stage == 1 ? 32 : 8;
}

// ------------------------------------------------------------ model bundle

ModelBundle::ModelBundle(const TrainConfig& cfg_) : cfg(cfg_), bank(static_cast<size_t>(cfg_.bank_capacity)) {
    Rng rng(cfg.seed ^ 0xabcdef12345ULL);
    appearance::EncoderConfig ec{cfg.patch_size, cfg.d_model, cfg.enc_layers, cfg.enc_heads};
    encoder = appearance::AppearanceEncoder(ec, cfg.resolution, rng);
    proj = motion::ProjectionWeights(cfg.d_model, rng);
    mod = modulation::ModulationWeights(cfg.d_model, cfg.d_k, rng);
    adapter = modulation::AdapterWeights(cfg.d_model, cfg.enc_heads, rng);

    diffusion::UNetConfig uc;
    uc.latent_channels = diffusion::latent_channels();
    uc.width0 = cfg.width0;
    uc.width1 = cfg.width1;
    uc.d_cond = cfg.d_model;
    uc.t_dim = cfg.t_dim;
    uc.temb_hidden = cfg.temb_hidden;
    uc.gn_groups = cfg.gn_groups;
    uc.cond_tokens = cond_tokens();
    unet = diffusion::DenoiserWeights(uc, rng);

    null_cond = ad::leaf(rng.normal_tensor({cond_tokens(), cfg.d_model}, 0.0, 0.02));
    wcond = clipcond::CondModuleWeights(diffusion::latent_channels(), cfg.width0);
    schedule = diffusion::NoiseSchedule::linear(cfg.timesteps);
}

int ModelBundle::cond_tokens() const {
    appearance::EncoderConfig ec{cfg.patch_size, cfg.d_model, cfg.enc_layers, cfg.enc_heads};
    return ec.patches(cfg.resolution) + 1;
}

nn::ParamList ModelBundle::stage1_params() const {
    nn::ParamList p = encoder.params();
    proj.collect("proj", p);
    mod.collect("mod", p);
    adapter.collect("adapter", p);
    p.merge(unet.spatial_params());
    p.add("null_cond", null_cond);
    return p;
}

nn::ParamList ModelBundle::stage2_params() const {
    nn::ParamList p = unet.temporal_params();
    wcond.collect("wcond", p);
    return p;
}

nn::ParamList ModelBundle::frozen_in_stage2() const { return stage1_params(); }

nn::ParamList ModelBundle::all_params() const {
    nn::ParamList p = stage1_params();
    p.merge(stage2_params());
    return p;
}

ad::Var ModelBundle::appearance_condition(const ad::Var& source_image,
                                          const motion::MotionCoeffs& target) const {
    auto tokens = encoder.encode(source_image);
    auto mt = motion::motion_tokens(target, proj);
    auto modded = modulation::modulate(tokens.patch_tokens, mt, mod);
    return modulation::adapter(modded, tokens.class_token, adapter);
}

Tensor render_latent_for(const motion::MotionCoeffs& coeffs, int resolution) {
    return diffusion::latent_encode(world::render_motion_frame(coeffs, resolution).to_tensor());
}

// -------------------------------------------------------------- checkpoint

void save_checkpoint(const ModelBundle& model, const Adam& opt, const nn::ParamList& opt_params,
                     int64_t step, const Rng& rng, const std::string& path) {
    TensorFile tf;
    tf.meta["kind"] = "train_checkpoint";
    tf.meta["stage"] = std::to_string(model.cfg.stage);
    tf.meta["step"] = std::to_string(step);
    tf.meta["rng_state"] = rng.serialize_state();
    for (const auto& [k, v] : model.cfg.to_map()) tf.meta["config." + k] = v;
    for (const auto& [name, p] : model.all_params().items) tf.arrays.emplace_back(name, p->value);
    opt.save_state(opt_params, tf, "adam");
    model.bank.save(tf.arrays, "bank");
    write_tensor_file(tf, path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    TensorFile tf = read_tensor_file(path);
    if (!tf.meta.count("kind") || tf.meta.at("kind") != "train_checkpoint")
        throw std::runtime_error("load_checkpoint: not a training checkpoint: " + path);
    TrainConfig cfg;
    for (const auto& [k, v] : tf.meta) {
        if (k.rfind("config.", 0) == 0) cfg.set(k.substr(7), v);
    }
    LoadedCheckpoint out;
    out.config = cfg;
    out.model = std::make_unique<ModelBundle>(cfg);
    for (auto& [name, p] : out.model->all_params().items) {
        const Tensor& t = tf.array(name);  // throws naming missing arrays
        require(t.shape == p->value.shape, "load_checkpoint: shape mismatch for array '" + name + "'");
        p->value = t;
    }
    const nn::ParamList opt_params =
        cfg.stage == 1 ? out.model->stage1_params() : out.model->stage2_params();
    out.opt.lr = cfg.learning_rate;
    if (tf.meta.count("adam.t")) out.opt.load_state(opt_params, tf, "adam");
    out.model->bank.load(tf.arrays, "bank");
    out.step = std::stoll(tf.meta.at("step"));
    out.rng_state = tf.meta.at("rng_state");
    return out;
}

// ----------------------------------------------------------------- stage 1

namespace {

struct Stage1Sampler {
    const DatasetManifest& mf;
    const PixelCache& cache;
    std::vector<std::vector<int>> clip_global;  // clip -> global frame idx

    Stage1Sampler(const DatasetManifest& mf_, const PixelCache& cache_) : mf(mf_), cache(cache_) {
        clip_global.resize(mf.clips.size());
        for (size_t g = 0; g < cache.location.size(); ++g)
            clip_global[static_cast<size_t>(cache.location[g].first)].push_back(static_cast<int>(g));
    }
};

double run_stage1_step(const DatasetManifest& mf, const Stage1Sampler& smp, ModelBundle& model,
                       Adam& opt, const nn::ParamList& params, Rng& rng, int step,
                       TrainResult& result) {
    const TrainConfig& cfg = model.cfg;
    const int B = cfg.batch_size;
    const int C = diffusion::latent_channels();
    const int hw = cfg.resolution / diffusion::kSpaceToDepth;

    Tensor zt({B, C, hw, hw}), render({B, C, hw, hw}), eps({B, C, hw, hw});
    std::vector<int> tvec(static_cast<size_t>(B));
    std::vector<ad::Var> conds;
    std::vector<std::pair<ad::Var, int>> anchors;
    std::vector<ad::Var> augmented;
    const int64_t frame_sz = static_cast<int64_t>(C) * hw * hw;

    for (int b = 0; b < B; ++b) {
        const int ci = static_cast<int>(rng.uniform_int(static_cast<int64_t>(mf.clips.size())));
        const auto& clip = mf.clips[static_cast<size_t>(ci)];
        const auto& globals = smp.clip_global[static_cast<size_t>(ci)];
        const int nf = static_cast<int>(globals.size());
        const int target_f = static_cast<int>(rng.uniform_int(nf));
        const int source_f = static_cast<int>(rng.uniform_int(nf));

        const Image source_img = smp.cache.get(globals[static_cast<size_t>(source_f)]);
        const Image target_img = smp.cache.get(globals[static_cast<size_t>(target_f)]);
        const auto& target_coeffs = clip.frames[static_cast<size_t>(target_f)].coeffs;

        const int t = static_cast<int>(rng.uniform_int(cfg.timesteps));
        tvec[static_cast<size_t>(b)] = t;
        Tensor x0 = diffusion::latent_encode(target_img.to_tensor());
        Tensor e({C, hw, hw});
        rng.fill_normal(e);
        Tensor z = diffusion::q_sample(x0, t, e, model.schedule);
        std::copy(z.data.begin(), z.data.end(), zt.data.begin() + b * frame_sz);
        std::copy(e.data.begin(), e.data.end(), eps.data.begin() + b * frame_sz);
        Tensor r = render_latent_for(target_coeffs, cfg.resolution);
        std::copy(r.data.begin(), r.data.end(), render.data.begin() + b * frame_sz);

        const uint64_t aug_seed = rng.next_u64();
        const bool drop = rng.bernoulli(cfg.cond_dropout_prob);

        auto src_tokens = model.encoder.encode(source_img);
        anchors.emplace_back(src_tokens.class_token, clip.identity_id);
        const Image aug_img = appearance::photometric_augment(source_img, aug_seed, cfg.aug_strength);
        augmented.push_back(model.encoder.encode(aug_img).class_token);

        if (drop) {
            ++result.null_branch_count;
            conds.push_back(ad::reshape(model.null_cond, {1, model.cond_tokens(), cfg.d_model}));
        } else {
            auto mt = motion::motion_tokens(target_coeffs, model.proj);
            auto modded = modulation::modulate(src_tokens.patch_tokens, mt, model.mod);
            auto cond = modulation::adapter(modded, src_tokens.class_token, model.adapter);
            conds.push_back(ad::reshape(cond, {1, model.cond_tokens(), cfg.d_model}));
        }
    }

    auto condition = ad::concat(conds, 0);
    auto eps_hat = diffusion::denoise_forward(ad::constant(std::move(zt)), ad::constant(std::move(render)),
                                              tvec, condition, model.unet, false);
    auto denoise_loss = ad::mse(eps_hat, ad::constant(std::move(eps)));

    ad::Var total = denoise_loss;
    double id_value = 0.0;
    if (cfg.lambda_id > 0.0) {
        auto instances = modulation::build_contrastive_batch(anchors, augmented, model.bank);
        ad::Var id_sum = ad::constant_scalar(0.0);
        for (const auto& inst : instances)
            id_sum = ad::add(id_sum, modulation::identity_contrastive_loss(
                                          inst.anchor, inst.positives, inst.negatives, cfg.temperature));
        auto id_loss = ad::scale(id_sum, 1.0 / static_cast<double>(instances.size()));
        id_value = id_loss->value[0];
        total = ad::add(denoise_loss, ad::scale(id_loss, cfg.lambda_id));
    } else {
        // keep the bank stream identical whether or not the loss is active
        auto instances = modulation::build_contrastive_batch(anchors, augmented, model.bank);
        (void)instances;
    }

    const double total_v = total->value[0];
    if (!std::isfinite(total_v))
        throw std::runtime_error("train_stage1: non-finite loss at step " + std::to_string(step));

    opt.zero_grad(params);
    ad::backward(total);
    opt.step(params);

    result.logs.push_back({step, denoise_loss->value[0], id_value, total_v});
    return total_v;
}

}  // namespace

TrainResult train_stage1_resume(const DatasetManifest& mf, ModelBundle& model, Adam& opt, Rng& rng,
                                int64_t start_step, int64_t end_step) {
    mf.validate();
    require(model.cfg.stage == 1, "train_stage1: config stage must be 1");
    kernels::set_num_threads(model.cfg.threads);

    const PixelCache cache = world::cache_frames(mf);
    const Stage1Sampler smp{mf, cache};
    nn::ParamList params = model.stage1_params();
    require(opt.m.size() == params.items.size() || opt.m.empty(), "train_stage1: optimizer mismatch");
    if (opt.m.empty()) opt.init(params);

    TrainResult result;
    for (int64_t s = start_step; s < end_step; ++s) {
        const double v =
            run_stage1_step(mf, smp, model, opt, params, rng, static_cast<int>(s), result);
        if (model.cfg.log_every > 0 && (s % model.cfg.log_every == 0))
            std::cout << "[stage1] step " << s << " loss " << v << "\n" << std::flush;
    }
    result.final_step = end_step;
    return result;
}

TrainResult train_stage1(const DatasetManifest& mf, const TrainConfig& cfg, ModelBundle& model) {
    cfg.validate();
    Adam opt;
    opt.lr = cfg.learning_rate;
    Rng rng(cfg.seed);
    return train_stage1_resume(mf, model, opt, rng, 0, cfg.steps);
}

// ----------------------------------------------------------------- stage 2

TrainResult train_stage2(const DatasetManifest& mf, const TrainConfig& cfg, ModelBundle& model) {
    cfg.validate();
    require(cfg.stage == 2, "train_stage2: config stage must be 2");
    mf.validate();
    kernels::set_num_threads(cfg.threads);

    const PixelCache cache = world::cache_frames(mf);
    const Stage1Sampler smp{mf, cache};
    const int F = cfg.clip_length;
    const int C = diffusion::latent_channels();
    const int hw = cfg.resolution / diffusion::kSpaceToDepth;
    const int64_t frame_sz = static_cast<int64_t>(C) * hw * hw;

    nn::ParamList trainable = model.stage2_params();
    nn::ParamList frozen = model.frozen_in_stage2();
    Adam opt;
    opt.lr = cfg.learning_rate;
    opt.init(trainable);
    Rng rng(cfg.seed);

    TrainResult result;
    for (int step = 0; step < cfg.steps; ++step) {
        std::vector<Tensor> frozen_snapshot;
        if (cfg.verify_freeze) {
            frozen_snapshot.reserve(frozen.items.size());
            for (const auto& [_, p] : frozen.items) frozen_snapshot.push_back(p->value);
        }

        ad::Var loss;
        double batch_loss = 0.0;
        for (int b = 0; b < cfg.batch_size; ++b) {
            const int ci = static_cast<int>(rng.uniform_int(static_cast<int64_t>(mf.clips.size())));
            const auto& clip = mf.clips[static_cast<size_t>(ci)];
            const auto& globals = smp.clip_global[static_cast<size_t>(ci)];
            const int nf = static_cast<int>(globals.size());
            require(nf >= F, "train_stage2: clip shorter than clip_length");
            const int start = static_cast<int>(rng.uniform_int(nf - F + 1));
            const int source_f = static_cast<int>(rng.uniform_int(nf));

            Tensor x0({F, C, hw, hw}), render({F, C, hw, hw});
            for (int f = 0; f < F; ++f) {
                const Image img = cache.get(globals[static_cast<size_t>(start + f)]);
                Tensor lat = diffusion::latent_encode(img.to_tensor());
                std::copy(lat.data.begin(), lat.data.end(), x0.data.begin() + f * frame_sz);
                Tensor r = render_latent_for(clip.frames[static_cast<size_t>(start + f)].coeffs,
                                             cfg.resolution);
                std::copy(r.data.begin(), r.data.end(), render.data.begin() + f * frame_sz);
            }

            const int k = clipcond::sample_k(F, rng);
            clipcond::ClipConditioning cond =
                clipcond::build_training_condition(x0, k, cfg.sigma_cond, rng);

            const int t = static_cast<int>(rng.uniform_int(cfg.timesteps));
            Tensor eps(x0.shape);
            rng.fill_normal(eps);
            Tensor zt = diffusion::q_sample(x0, t, eps, model.schedule);

            // frozen appearance path
            Tensor cond_tokens;
            {
                ad::NoGradGuard ng;
                const Image source_img = cache.get(globals[static_cast<size_t>(source_f)]);
                std::vector<ad::Var> per_frame;
                auto src_tokens = model.encoder.encode(source_img);
                for (int f = 0; f < F; ++f) {
                    auto mt = motion::motion_tokens(
                        clip.frames[static_cast<size_t>(start + f)].coeffs, model.proj);
                    auto modded = modulation::modulate(src_tokens.patch_tokens, mt, model.mod);
                    auto cv = modulation::adapter(modded, src_tokens.class_token, model.adapter);
                    per_frame.push_back(ad::reshape(cv, {1, model.cond_tokens(), cfg.d_model}));
                }
                cond_tokens = ad::concat(per_frame, 0)->value;
            }

            diffusion::IcaHook hook{&cond, &model.wcond};
            auto eps_hat = diffusion::denoise_forward(
                ad::constant(std::move(zt)), ad::constant(std::move(render)),
                std::vector<int>(static_cast<size_t>(F), t), ad::constant(std::move(cond_tokens)),
                model.unet, true, hook);
            auto sample_loss = ad::mse(eps_hat, ad::constant(std::move(eps)));
            loss = (b == 0) ? sample_loss : ad::add(loss, sample_loss);
        }
        if (cfg.batch_size > 1) loss = ad::scale(loss, 1.0 / cfg.batch_size);
        batch_loss = loss->value[0];
        if (!std::isfinite(batch_loss))
            throw std::runtime_error("train_stage2: non-finite loss at step " + std::to_string(step));

        opt.zero_grad(trainable);
        ad::backward(loss);
        opt.step(trainable);

        if (cfg.verify_freeze) {
            for (size_t i = 0; i < frozen.items.size(); ++i)
                if (!frozen.items[i].second->value.bit_equal(frozen_snapshot[i]))
                    throw std::runtime_error("train_stage2: freeze violation on parameter '" +
                                             frozen.items[i].first + "' at step " +
                                             std::to_string(step));
        }

        result.logs.push_back({step, batch_loss, 0.0, batch_loss});
        if (cfg.log_every > 0 && (step % cfg.log_every == 0))
            std::cout << "[stage2] step " << step << " loss " << batch_loss << "\n" << std::flush;
    }
    result.final_step = cfg.steps;
    return result;
}

}  // namespace faceanim::train
