#include "quatnn/multichannel.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "quatnn/rng.hpp"
#include "quatnn/serialization.hpp"
#include "quatnn/vendor_json.hpp"

namespace fs = std::filesystem;

namespace quatnn {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Fbank::Fbank(const FbankConfig& cfg) : cfg_(cfg) {
    if (cfg.n_filters == 0 || cfg.sample_rate <= 0.0 || cfg.frame_len() == 0 ||
        cfg.hop_len() == 0) {
        throw std::invalid_argument("fbank: invalid framing configuration");
    }
    if (cfg.mel_low_hz <= 0.0 || cfg.high_hz() <= cfg.mel_low_hz ||
        cfg.high_hz() > 0.5 * cfg.sample_rate) {
        throw std::invalid_argument("fbank: mel band must satisfy 0 < low < high <= Nyquist");
    }
    const std::size_t frame = cfg.frame_len();
    nfft_ = 1;
    while (nfft_ < frame) nfft_ <<= 1;

    window_.resize(frame);
    for (std::size_t n = 0; n < frame; ++n) {
        window_[n] = 0.54 - 0.46 * std::cos(2.0 * M_PI * static_cast<double>(n) /
                                            static_cast<double>(frame - 1));
    }

    // Triangular filters on mel-spaced points between low and high.
    const double mel_lo = hz_to_mel(cfg.mel_low_hz);
    const double mel_hi = hz_to_mel(cfg.high_hz());
    mel_points_.resize(cfg.n_filters + 2);
    for (std::size_t j = 0; j < mel_points_.size(); ++j) {
        const double mel = mel_lo + (mel_hi - mel_lo) * static_cast<double>(j) /
                                        static_cast<double>(cfg.n_filters + 1);
        mel_points_[j] = mel_to_hz(mel);
    }
    const std::size_t n_bins = nfft_ / 2 + 1;
    filters_.assign(cfg.n_filters, std::vector<double>(n_bins, 0.0));
    for (std::size_t j = 0; j < cfg.n_filters; ++j) {
        const double lo = mel_points_[j], mid = mel_points_[j + 1], hi = mel_points_[j + 2];
        for (std::size_t b = 0; b < n_bins; ++b) {
            const double f = static_cast<double>(b) * cfg.sample_rate /
                             static_cast<double>(nfft_);
            if (f <= lo || f >= hi) continue;
            filters_[j][b] = f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
        }
    }

    // FFTW_UNALIGNED lets per-call buffers execute the plan from any thread.
    std::vector<double> in(nfft_, 0.0);
    std::vector<std::complex<double>> out(n_bins);
    plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(nfft_), in.data(),
                                 reinterpret_cast<fftw_complex*>(out.data()),
                                 FFTW_ESTIMATE | FFTW_UNALIGNED);
    if (!plan_) throw std::runtime_error("fbank: fftw plan creation failed");
}

Fbank::~Fbank() {
    if (plan_) fftw_destroy_plan(static_cast<fftw_plan>(plan_));
}

double Fbank::filter_center_hz(std::size_t j) const { return mel_points_.at(j + 1); }

Tensor Fbank::apply(std::span<const double> wave) const {
    const std::size_t frame = cfg_.frame_len();
    const std::size_t hop = cfg_.hop_len();
    if (wave.size() < frame) {
        throw std::invalid_argument("fbank: waveform has " + std::to_string(wave.size()) +
                                    " samples, one frame needs " + std::to_string(frame));
    }
    const std::size_t T = cfg_.n_frames(wave.size());
    const std::size_t n_bins = nfft_ / 2 + 1;
    Tensor out = Tensor::zeros({T, cfg_.n_filters});
    std::vector<double> in(nfft_);
    std::vector<std::complex<double>> spec(n_bins);
    std::vector<double> power(n_bins);
    for (std::size_t t = 0; t < T; ++t) {
        std::fill(in.begin(), in.end(), 0.0);
        const double* src = wave.data() + t * hop;
        for (std::size_t n = 0; n < frame; ++n) in[n] = src[n] * window_[n];
        fftw_execute_dft_r2c(static_cast<fftw_plan>(plan_), in.data(),
                             reinterpret_cast<fftw_complex*>(spec.data()));
        for (std::size_t b = 0; b < n_bins; ++b) power[b] = std::norm(spec[b]);
        double* row = out.row(t);
        for (std::size_t j = 0; j < cfg_.n_filters; ++j) {
            double e = 0.0;
            const std::vector<double>& w = filters_[j];
            for (std::size_t b = 0; b < n_bins; ++b) e += w[b] * power[b];
            row[j] = std::log(std::max(e, cfg_.log_floor));
        }
    }
    return out;
}

Tensor fbank(std::span<const double> wave, const FbankConfig& cfg) {
    return Fbank(cfg).apply(wave);
}

// ---------------------------------------------------------------------------
// Scene synthesis.

std::array<double, 3> class_template_hz(std::size_t k) {
    const double kk = static_cast<double>(k);
    return {300.0 + 90.0 * kk, 900.0 + 180.0 * kk, 2000.0 + 320.0 * kk};
}

MultiChannelScene synth_scene(const SceneConfig& cfg, std::uint64_t seed) {
    if (cfg.num_classes < 2) throw std::invalid_argument("synth_scene: need at least 2 classes");
    if (cfg.max_delay < 0 || cfg.max_delay > cfg.delay_bound) {
        throw std::invalid_argument("synth_scene: max_delay outside [0, " +
                                    std::to_string(cfg.delay_bound) + "]");
    }
    if (cfg.noise_enabled &&
        (cfg.min_snr_db < 0.0 || cfg.max_snr_db > 30.0 || cfg.min_snr_db > cfg.max_snr_db)) {
        throw std::invalid_argument("synth_scene: SNR range must lie within [0, 30] dB");
    }
    if (cfg.min_duration_s <= 0.0 || cfg.max_duration_s < cfg.min_duration_s ||
        cfg.min_segment_s <= 0.0 || cfg.max_segment_s < cfg.min_segment_s) {
        throw std::invalid_argument("synth_scene: invalid duration or segment range");
    }
    const double top = class_template_hz(cfg.num_classes - 1)[2];
    if (top >= 0.5 * cfg.sample_rate) {
        throw std::invalid_argument("synth_scene: class templates exceed Nyquist");
    }

    std::mt19937_64 rng(mix64(seed));
    MultiChannelScene scene;
    scene.sample_rate = cfg.sample_rate;
    scene.tail_ms = cfg.tail_level > 0.0 ? cfg.tail_ms : 0.0;

    const std::size_t len = static_cast<std::size_t>(
        uniform(rng, cfg.min_duration_s, cfg.max_duration_s) * cfg.sample_rate);
    scene.source.assign(len, 0.0);

    // Class-bearing source: fixed three-sinusoid template per class, random
    // phases, segments of random class and length.
    std::vector<int> sample_class(len, 0);
    const double amps[3] = {1.0, 0.8, 0.6};
    std::size_t pos = 0;
    while (pos < len) {
        const std::size_t seg = std::min(
            len - pos, static_cast<std::size_t>(
                           uniform(rng, cfg.min_segment_s, cfg.max_segment_s) * cfg.sample_rate));
        const int cls = static_cast<int>(uniform_index(rng, cfg.num_classes));
        const std::array<double, 3> freqs = class_template_hz(static_cast<std::size_t>(cls));
        double phase[3];
        for (int j = 0; j < 3; ++j) phase[j] = uniform(rng, 0.0, 2.0 * M_PI);
        for (std::size_t n = pos; n < pos + seg; ++n) {
            double v = 0.0;
            for (int j = 0; j < 3; ++j) {
                v += amps[j] * std::sin(2.0 * M_PI * freqs[j] *
                                            static_cast<double>(n) / cfg.sample_rate +
                                        phase[j]);
            }
            scene.source[n] = v;
            sample_class[n] = cls;
        }
        pos += seg;
    }

    // Frame labels by frame-center sample.
    const std::size_t T = cfg.fbank.n_frames(len);
    scene.frame_labels.resize(T);
    for (std::size_t t = 0; t < T; ++t) {
        std::size_t center = t * cfg.fbank.hop_len() + cfg.fbank.frame_len() / 2;
        if (center >= len) center = len - 1;
        scene.frame_labels[t] = sample_class[center];
    }

    const std::size_t tail_len =
        cfg.tail_level > 0.0
            ? std::max<std::size_t>(1, static_cast<std::size_t>(cfg.tail_ms * cfg.sample_rate /
                                                                1000.0))
            : 1;
    const double rho = tail_len > 1 ? std::pow(0.01, 1.0 / static_cast<double>(tail_len)) : 0.0;

    for (int m = 0; m < 4; ++m) {
        ChannelTruth& tr = scene.truth[m];
        tr.delay_samples = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(
                                                                   cfg.max_delay) + 1));
        tr.gain = uniform(rng, cfg.min_gain, cfg.max_gain);
        tr.snr_db = cfg.noise_enabled ? uniform(rng, cfg.min_snr_db, cfg.max_snr_db)
                                      : std::numeric_limits<double>::infinity();

        std::vector<double> tail(tail_len, 0.0);
        tail[0] = 1.0;
        double decay = 1.0;
        for (std::size_t i = 1; i < tail_len; ++i) {
            decay *= rho;
            tail[i] = cfg.tail_level * decay * gaussian(rng);
        }

        std::vector<double>& ch = scene.channels[m];
        ch.assign(len, 0.0);
        const int d = tr.delay_samples;
        for (std::size_t n = 0; n < len; ++n) {
            double v = 0.0;
            const std::size_t kmax = std::min<std::size_t>(tail_len, n + 1);
            for (std::size_t k = 0; k < kmax; ++k) {
                const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(n - k) - d;
                if (src >= 0) v += tail[k] * scene.source[static_cast<std::size_t>(src)];
            }
            ch[n] = tr.gain * v;
        }

        if (cfg.noise_enabled) {
            double sig_power = 0.0;
            for (double v : ch) sig_power += v * v;
            sig_power /= static_cast<double>(len);
            std::vector<double> noise(len);
            double noise_power = 0.0;
            for (double& v : noise) {
                v = gaussian(rng);
                noise_power += v * v;
            }
            noise_power /= static_cast<double>(len);
            const double target = sig_power / std::pow(10.0, tr.snr_db / 10.0);
            const double scale = noise_power > 0.0 ? std::sqrt(target / noise_power) : 0.0;
            for (std::size_t n = 0; n < len; ++n) ch[n] += scale * noise[n];
        }
    }
    return scene;
}

// ---------------------------------------------------------------------------
// Packing and controls.

const char* provenance_name(Provenance p) {
    switch (p) {
        case Provenance::FourMic: return "four_mic";
        case Provenance::CopiedMic: return "copied_mic";
        case Provenance::Beamformed: return "beamformed";
    }
    return "?";
}

Provenance provenance_from_name(const std::string& s) {
    if (s == "four_mic") return Provenance::FourMic;
    if (s == "copied_mic") return Provenance::CopiedMic;
    if (s == "beamformed") return Provenance::Beamformed;
    throw std::invalid_argument("unknown provenance '" + s + "'");
}

const char* split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Valid: return "valid";
        case Split::Test: return "test";
    }
    return "?";
}

FeatureSequence pack_quaternion_features(const std::array<Tensor, 4>& feats) {
    for (int m = 1; m < 4; ++m) {
        if (feats[m].shape != feats[0].shape) {
            throw std::invalid_argument("pack_quaternion_features: microphone " +
                                        std::to_string(m + 1) +
                                        " features differ in shape from microphone 1");
        }
    }
    FeatureSequence fs;
    fs.provenance = Provenance::FourMic;
    fs.frames = QuaternionTensor::pack(
        feats[0].shape, {feats[0].data.data(), feats[0].data.size()},
        {feats[1].data.data(), feats[1].data.size()},
        {feats[2].data.data(), feats[2].data.size()},
        {feats[3].data.data(), feats[3].data.size()});
    return fs;
}

FeatureSequence copied_mic_control(const Tensor& feat) {
    FeatureSequence fs;
    fs.provenance = Provenance::CopiedMic;
    std::span<const double> p{feat.data.data(), feat.data.size()};
    fs.frames = QuaternionTensor::pack(feat.shape, p, p, p, p);
    return fs;
}

std::array<int, 4> estimate_delays(const MultiChannelScene& scene, int ref_channel,
                                   int max_lag) {
    const std::vector<double>& ref = scene.channels.at(static_cast<std::size_t>(ref_channel));
    double ref_energy = 0.0;
    for (double v : ref) ref_energy += v * v;
    if (ref_energy == 0.0) {
        throw std::domain_error("delay_and_sum: reference channel is all zero");
    }
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(ref.size());
    std::array<int, 4> lags{};
    for (int m = 0; m < 4; ++m) {
        if (m == ref_channel) {
            lags[m] = 0;
            continue;
        }
        const std::vector<double>& ch = scene.channels[static_cast<std::size_t>(m)];
        double best = -std::numeric_limits<double>::infinity();
        int best_lag = 0;
        for (int lag = -max_lag; lag <= max_lag; ++lag) {
            double acc = 0.0;
            for (std::ptrdiff_t i = 0; i < n; ++i) {
                const std::ptrdiff_t j = i + lag;
                if (j >= 0 && j < n) acc += ref[static_cast<std::size_t>(i)] *
                                             ch[static_cast<std::size_t>(j)];
            }
            if (acc > best) {
                best = acc;
                best_lag = lag;
            }
        }
        lags[m] = best_lag;
    }
    return lags;
}

std::vector<double> delay_and_sum(const MultiChannelScene& scene, int ref_channel,
                                  int max_lag) {
    const std::array<int, 4> lags = estimate_delays(scene, ref_channel, max_lag);
    const std::ptrdiff_t n =
        static_cast<std::ptrdiff_t>(scene.channels[0].size());
    std::vector<double> out(static_cast<std::size_t>(n), 0.0);
    for (int m = 0; m < 4; ++m) {
        const std::vector<double>& ch = scene.channels[static_cast<std::size_t>(m)];
        const std::ptrdiff_t lag = lags[m];
        for (std::ptrdiff_t i = 0; i < n; ++i) {
            const std::ptrdiff_t j = i + lag;
            if (j >= 0 && j < n) out[static_cast<std::size_t>(i)] += ch[static_cast<std::size_t>(j)];
        }
    }
    for (double& v : out) v *= 0.25;
    return out;
}

// ---------------------------------------------------------------------------
// Dataset.

namespace {

std::size_t split_count(const DatasetConfig& cfg, Split s) {
    switch (s) {
        case Split::Train: return cfg.train_scenes;
        case Split::Valid: return cfg.valid_scenes;
        case Split::Test: return cfg.test_scenes;
    }
    return 0;
}

std::uint64_t item_seed(const DatasetConfig& cfg, Split s, std::size_t idx) {
    return derive_seed(cfg.seed, 0x5C + static_cast<std::uint64_t>(s), idx);
}

}  // namespace

std::vector<FeatureSequence>& dataset_items(Dataset& ds, Split s, Provenance p) {
    return ds.items[static_cast<std::size_t>(s)][static_cast<std::size_t>(p)];
}
const std::vector<FeatureSequence>& dataset_items(const Dataset& ds, Split s, Provenance p) {
    return ds.items[static_cast<std::size_t>(s)][static_cast<std::size_t>(p)];
}

Dataset build_dataset(const DatasetConfig& cfg) {
    if (cfg.train_scenes == 0 || cfg.valid_scenes == 0 || cfg.test_scenes == 0) {
        throw std::invalid_argument("build_dataset: every split needs at least one scene");
    }
    if (cfg.copy_channel < 0 || cfg.copy_channel > 3 || cfg.beam_ref_channel < 0 ||
        cfg.beam_ref_channel > 3) {
        throw std::invalid_argument("build_dataset: channel indices must be in [0, 3]");
    }
    Dataset ds;
    ds.cfg = cfg;
    Fbank fb(cfg.scene.fbank);
    for (Split s : {Split::Train, Split::Valid, Split::Test}) {
        const std::size_t count = split_count(cfg, s);
        for (std::size_t i = 0; i < count; ++i) {
            const MultiChannelScene scene = synth_scene(cfg.scene, item_seed(cfg, s, i));

            std::array<Tensor, 4> feats;
            for (int m = 0; m < 4; ++m)
                feats[m] = fb.apply({scene.channels[m].data(), scene.channels[m].size()});

            FeatureSequence four = pack_quaternion_features(feats);
            four.labels = scene.frame_labels;

            FeatureSequence copied = copied_mic_control(feats[cfg.copy_channel]);
            copied.labels = scene.frame_labels;

            const std::vector<double> beam =
                delay_and_sum(scene, cfg.beam_ref_channel, cfg.scene.delay_bound);
            FeatureSequence beamformed = copied_mic_control(fb.apply({beam.data(), beam.size()}));
            beamformed.provenance = Provenance::Beamformed;
            beamformed.labels = scene.frame_labels;

            dataset_items(ds, s, Provenance::FourMic).push_back(std::move(four));
            dataset_items(ds, s, Provenance::CopiedMic).push_back(std::move(copied));
            dataset_items(ds, s, Provenance::Beamformed).push_back(std::move(beamformed));
        }
    }
    // Scalar standardization per provenance over the train split.
    for (std::size_t p = 0; p < kNumProvenances; ++p) {
        double sum = 0.0, sq = 0.0;
        std::size_t n = 0;
        for (const FeatureSequence& fs : ds.items[0][p]) {
            for (double v : fs.frames.raw()) {
                sum += v;
                sq += v * v;
                ++n;
            }
        }
        const double mean = sum / static_cast<double>(n);
        const double var = sq / static_cast<double>(n) - mean * mean;
        ds.norm_mean[p] = mean;
        ds.norm_std[p] = var > 1e-12 ? std::sqrt(var) : 1.0;
    }
    return ds;
}

void write_dataset(const std::string& dir, const Dataset& ds) {
    const fs::path root(dir);
    if (!root.parent_path().empty() && !fs::exists(root.parent_path())) {
        throw std::runtime_error("dataset output parent directory '" +
                                 root.parent_path().string() + "' does not exist");
    }
    fs::create_directory(root);

    nlohmann::json manifest;
    manifest["format"] = "quatnn-dataset-1";
    const DatasetConfig& c = ds.cfg;
    manifest["config"] = {
        {"train_scenes", c.train_scenes},
        {"valid_scenes", c.valid_scenes},
        {"test_scenes", c.test_scenes},
        {"seed", c.seed},
        {"copy_channel", c.copy_channel},
        {"beam_ref_channel", c.beam_ref_channel},
        {"scene",
         {{"sample_rate", c.scene.sample_rate},
          {"min_duration_s", c.scene.min_duration_s},
          {"max_duration_s", c.scene.max_duration_s},
          {"num_classes", c.scene.num_classes},
          {"min_segment_s", c.scene.min_segment_s},
          {"max_segment_s", c.scene.max_segment_s},
          {"max_delay", c.scene.max_delay},
          {"delay_bound", c.scene.delay_bound},
          {"min_gain", c.scene.min_gain},
          {"max_gain", c.scene.max_gain},
          {"noise_enabled", c.scene.noise_enabled},
          {"min_snr_db", c.scene.min_snr_db},
          {"max_snr_db", c.scene.max_snr_db},
          {"tail_ms", c.scene.tail_ms},
          {"tail_level", c.scene.tail_level},
          {"fbank",
           {{"sample_rate", c.scene.fbank.sample_rate},
            {"n_filters", c.scene.fbank.n_filters},
            {"frame_len_ms", c.scene.fbank.frame_len_ms},
            {"hop_ms", c.scene.fbank.hop_ms},
            {"mel_low_hz", c.scene.fbank.mel_low_hz},
            {"mel_high_hz", c.scene.fbank.mel_high_hz},
            {"log_floor", c.scene.fbank.log_floor}}}}}};
    for (std::size_t p = 0; p < kNumProvenances; ++p) {
        manifest["normalization"][provenance_name(static_cast<Provenance>(p))] = {
            {"mean", ds.norm_mean[p]}, {"std", ds.norm_std[p]}};
    }
    for (Split s : {Split::Train, Split::Valid, Split::Test}) {
        nlohmann::json sp;
        sp["count"] = split_count(c, s);
        std::vector<std::uint64_t> seeds;
        for (std::size_t i = 0; i < split_count(c, s); ++i) seeds.push_back(item_seed(c, s, i));
        sp["seeds"] = seeds;
        manifest["splits"][split_name(s)] = sp;
    }
    {
        std::ofstream mf(root / "manifest.json");
        if (!mf) throw std::runtime_error("cannot write manifest.json");
        mf << manifest.dump(2) << "\n";
    }

    for (Split s : {Split::Train, Split::Valid, Split::Test}) {
        const fs::path sub = root / "items" / split_name(s);
        fs::create_directories(sub);
        for (std::size_t p = 0; p < kNumProvenances; ++p) {
            const auto& items = ds.items[static_cast<std::size_t>(s)][p];
            for (std::size_t i = 0; i < items.size(); ++i) {
                const FeatureSequence& fsq = items[i];
                char stem[32];
                std::snprintf(stem, sizeof(stem), "%04zu", i);
                const std::string fname = std::string(stem) + "." +
                                          provenance_name(static_cast<Provenance>(p)) + ".qar";
                NamedArray frames;
                frames.name = "frames";
                frames.shape = {4, fsq.frames.shape()[0], fsq.frames.shape()[1]};
                frames.values = std::vector<double>(fsq.frames.raw().begin(),
                                                    fsq.frames.raw().end());
                NamedArray labels;
                labels.name = "labels";
                labels.shape = {fsq.labels.size()};
                labels.values = std::vector<std::int64_t>(fsq.labels.begin(), fsq.labels.end());
                write_array_container((sub / fname).string(), {frames, labels});
            }
        }
    }
}

Dataset load_dataset(const std::string& dir) {
    const fs::path root(dir);
    std::ifstream mf(root / "manifest.json");
    if (!mf) throw std::runtime_error("cannot open dataset manifest in '" + dir + "'");
    nlohmann::json manifest = nlohmann::json::parse(mf);
    if (manifest.value("format", "") != "quatnn-dataset-1") {
        throw std::runtime_error("unsupported dataset format in '" + dir + "'");
    }
    Dataset ds;
    const auto& c = manifest.at("config");
    ds.cfg.train_scenes = c.at("train_scenes").get<std::size_t>();
    ds.cfg.valid_scenes = c.at("valid_scenes").get<std::size_t>();
    ds.cfg.test_scenes = c.at("test_scenes").get<std::size_t>();
    ds.cfg.seed = c.at("seed").get<std::uint64_t>();
    ds.cfg.copy_channel = c.at("copy_channel").get<int>();
    ds.cfg.beam_ref_channel = c.at("beam_ref_channel").get<int>();
    const auto& sc = c.at("scene");
    ds.cfg.scene.sample_rate = sc.at("sample_rate").get<double>();
    ds.cfg.scene.min_duration_s = sc.at("min_duration_s").get<double>();
    ds.cfg.scene.max_duration_s = sc.at("max_duration_s").get<double>();
    ds.cfg.scene.num_classes = sc.at("num_classes").get<std::size_t>();
    ds.cfg.scene.min_segment_s = sc.at("min_segment_s").get<double>();
    ds.cfg.scene.max_segment_s = sc.at("max_segment_s").get<double>();
    ds.cfg.scene.max_delay = sc.at("max_delay").get<int>();
    ds.cfg.scene.delay_bound = sc.at("delay_bound").get<int>();
    ds.cfg.scene.min_gain = sc.at("min_gain").get<double>();
    ds.cfg.scene.max_gain = sc.at("max_gain").get<double>();
    ds.cfg.scene.noise_enabled = sc.at("noise_enabled").get<bool>();
    ds.cfg.scene.min_snr_db = sc.at("min_snr_db").get<double>();
    ds.cfg.scene.max_snr_db = sc.at("max_snr_db").get<double>();
    ds.cfg.scene.tail_ms = sc.at("tail_ms").get<double>();
    ds.cfg.scene.tail_level = sc.at("tail_level").get<double>();
    const auto& fb = sc.at("fbank");
    ds.cfg.scene.fbank.sample_rate = fb.at("sample_rate").get<double>();
    ds.cfg.scene.fbank.n_filters = fb.at("n_filters").get<std::size_t>();
    ds.cfg.scene.fbank.frame_len_ms = fb.at("frame_len_ms").get<double>();
    ds.cfg.scene.fbank.hop_ms = fb.at("hop_ms").get<double>();
    ds.cfg.scene.fbank.mel_low_hz = fb.at("mel_low_hz").get<double>();
    ds.cfg.scene.fbank.mel_high_hz = fb.at("mel_high_hz").get<double>();
    ds.cfg.scene.fbank.log_floor = fb.at("log_floor").get<double>();

    for (std::size_t p = 0; p < kNumProvenances; ++p) {
        const auto& nn = manifest.at("normalization")
                             .at(provenance_name(static_cast<Provenance>(p)));
        ds.norm_mean[p] = nn.at("mean").get<double>();
        ds.norm_std[p] = nn.at("std").get<double>();
    }

    for (Split s : {Split::Train, Split::Valid, Split::Test}) {
        const std::size_t count =
            manifest.at("splits").at(split_name(s)).at("count").get<std::size_t>();
        for (std::size_t p = 0; p < kNumProvenances; ++p) {
            auto& items = ds.items[static_cast<std::size_t>(s)][p];
            const double mean = ds.norm_mean[p];
            const double inv_std = 1.0 / ds.norm_std[p];
            for (std::size_t i = 0; i < count; ++i) {
                char stem[32];
                std::snprintf(stem, sizeof(stem), "%04zu", i);
                const fs::path file = root / "items" / split_name(s) /
                                      (std::string(stem) + "." +
                                       provenance_name(static_cast<Provenance>(p)) + ".qar");
                const std::vector<NamedArray> arrays = read_array_container(file.string());
                const NamedArray* frames = nullptr;
                const NamedArray* labels = nullptr;
                for (const auto& a : arrays) {
                    if (a.name == "frames") frames = &a;
                    if (a.name == "labels") labels = &a;
                }
                if (!frames || !labels || frames->shape.size() != 3 ||
                    frames->shape[0] != 4) {
                    throw std::runtime_error("malformed dataset item " + file.string());
                }
                FeatureSequence fsq;
                fsq.provenance = static_cast<Provenance>(p);
                const std::size_t T = frames->shape[1], F = frames->shape[2];
                fsq.frames = QuaternionTensor::zeros({T, F});
                auto raw = fsq.frames.raw();
                const std::vector<double>& v = frames->f64();
                for (std::size_t j = 0; j < raw.size(); ++j)
                    raw[j] = (v[j] - mean) * inv_std;
                fsq.labels.assign(labels->i64().begin(), labels->i64().end());
                if (fsq.labels.size() != T) {
                    throw std::runtime_error("label count mismatch in " + file.string());
                }
                items.push_back(std::move(fsq));
            }
        }
    }
    return ds;
}

QSequenceExample to_qexample(const FeatureSequence& fs) {
    return {fs.frames, fs.labels};
}

RSequenceExample to_rexample(const FeatureSequence& fs) {
    const std::size_t T = fs.frames.shape()[0];
    const std::size_t F = fs.frames.shape()[1];
    RSequenceExample ex;
    ex.labels = fs.labels;
    if (fs.provenance == Provenance::FourMic) {
        ex.frames = Tensor::zeros({T, 4 * F});
        for (std::size_t t = 0; t < T; ++t) {
            QView src = row_view(fs.frames, t);
            double* dst = ex.frames.row(t);
            for (int k = 0; k < 4; ++k)
                for (std::size_t f = 0; f < F; ++f) dst[k * F + f] = src.p[k][f];
        }
    } else {
        // copied_mic / beamformed carry one real channel replicated across
        // planes; the real baseline sees it once.
        ex.frames = Tensor::zeros({T, F});
        for (std::size_t t = 0; t < T; ++t) {
            QView src = row_view(fs.frames, t);
            double* dst = ex.frames.row(t);
            for (std::size_t f = 0; f < F; ++f) dst[f] = src.p[0][f];
        }
    }
    return ex;
}

}  // namespace quatnn
