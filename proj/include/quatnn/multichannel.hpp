#pragma once

// Desk-scale multi-channel data: synthetic 4-channel scene generation,
// log-mel filterbank features, quaternion packing of the four microphones,
// the copied-microphone control, the delay-and-sum baseline, and the on-disk
// dataset container.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "quatnn/network.hpp"
#include "quatnn/qtensor.hpp"
#include "quatnn/tensor.hpp"

namespace quatnn {

// ---------------------------------------------------------------------------
// Features.

struct FbankConfig {
    double sample_rate{8000.0};
    std::size_t n_filters{40};
    double frame_len_ms{25.0};
    double hop_ms{10.0};
    double mel_low_hz{20.0};
    double mel_high_hz{0.0};  // 0 means 0.95 * Nyquist
    double log_floor{1e-10};

    std::size_t frame_len() const {
        return static_cast<std::size_t>(frame_len_ms * sample_rate / 1000.0 + 0.5);
    }
    std::size_t hop_len() const {
        return static_cast<std::size_t>(hop_ms * sample_rate / 1000.0 + 0.5);
    }
    double high_hz() const { return mel_high_hz > 0.0 ? mel_high_hz : 0.475 * sample_rate; }
    std::size_t n_frames(std::size_t samples) const {
        return samples < frame_len() ? 0 : 1 + (samples - frame_len()) / hop_len();
    }
};

// mel = 2595 * log10(1 + f / 700)
double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Hamming window -> power spectrum -> triangular mel filters -> natural log
// with a floor. Output is [T, n_filters].
class Fbank {
public:
    explicit Fbank(const FbankConfig& cfg);
    ~Fbank();
    Fbank(const Fbank&) = delete;
    Fbank& operator=(const Fbank&) = delete;

    Tensor apply(std::span<const double> wave) const;

    const FbankConfig& config() const { return cfg_; }
    double filter_center_hz(std::size_t j) const;  // peak frequency of filter j

private:
    FbankConfig cfg_;
    std::size_t nfft_{0};
    std::vector<double> window_;
    std::vector<double> mel_points_;            // n_filters + 2 edge frequencies, Hz
    std::vector<std::vector<double>> filters_;  // per filter: weight per FFT bin
    void* plan_{nullptr};                       // fftw_plan
};

Tensor fbank(std::span<const double> wave, const FbankConfig& cfg);

// ---------------------------------------------------------------------------
// Scenes.

struct ChannelTruth {
    int delay_samples{0};
    double gain{1.0};
    double snr_db{0.0};  // +inf when noise is disabled
};

struct MultiChannelScene {
    double sample_rate{8000.0};
    std::array<std::vector<double>, 4> channels;
    std::vector<double> source;  // clean class-bearing signal, kept as ground truth
    std::array<ChannelTruth, 4> truth;
    double tail_ms{0.0};
    std::vector<int> frame_labels;  // per framing config, one class per frame
};

struct SceneConfig {
    double sample_rate{8000.0};
    double min_duration_s{1.0};
    double max_duration_s{1.6};
    std::size_t num_classes{4};
    double min_segment_s{0.25};
    double max_segment_s{0.60};
    int max_delay{12};        // drawn uniformly from {0..max_delay}
    int delay_bound{20};      // validation bound on max_delay
    double min_gain{0.75};
    double max_gain{1.25};
    bool noise_enabled{true};
    double min_snr_db{0.0};
    double max_snr_db{6.0};
    double tail_ms{25.0};
    double tail_level{0.25};  // 0 disables the decay tail
    FbankConfig fbank;
};

// Draws a class-dependent source (one of num_classes fixed spectral
// templates, switching at random segment boundaries), renders each channel
// as gain * delay(source) convolved with a short random exponential-decay
// tail, and adds independent noise at the configured per-channel SNR.
MultiChannelScene synth_scene(const SceneConfig& cfg, std::uint64_t seed);

// The three sinusoid frequencies of one class template.
std::array<double, 3> class_template_hz(std::size_t k);

// ---------------------------------------------------------------------------
// Quaternion packing (mic m -> component m) and the ablation controls.

enum class Provenance { FourMic, CopiedMic, Beamformed };

const char* provenance_name(Provenance p);
Provenance provenance_from_name(const std::string& s);

struct FeatureSequence {
    QuaternionTensor frames;  // [T, F]
    std::vector<int> labels;  // [T]
    Provenance provenance{Provenance::FourMic};
};

// quaternion[t][f] = (M1[t][f], M2[t][f], M3[t][f], M4[t][f])
FeatureSequence pack_quaternion_features(const std::array<Tensor, 4>& feats);

// All four components carry the same single-microphone features.
FeatureSequence copied_mic_control(const Tensor& feat);

// Integer-delay alignment against the reference channel (argmax of
// cross-correlation within +-max_lag) followed by the channel average.
std::vector<double> delay_and_sum(const MultiChannelScene& scene, int ref_channel = 0,
                                  int max_lag = 20);

// Estimated integer delays relative to the reference channel.
std::array<int, 4> estimate_delays(const MultiChannelScene& scene, int ref_channel = 0,
                                   int max_lag = 20);

// ---------------------------------------------------------------------------
// Dataset.

struct DatasetConfig {
    std::size_t train_scenes{200};
    std::size_t valid_scenes{40};
    std::size_t test_scenes{60};
    SceneConfig scene;
    std::uint64_t seed{0};
    int copy_channel{0};      // microphone used by the copied control
    int beam_ref_channel{0};  // beamformer reference
};

enum class Split { Train, Valid, Test };
constexpr std::size_t kNumSplits = 3;
constexpr std::size_t kNumProvenances = 3;
const char* split_name(Split s);

struct Dataset {
    DatasetConfig cfg;
    // items[split][provenance]; the same scene index across provenances comes
    // from the same scene seed, so ablations are paired.
    std::vector<FeatureSequence> items[kNumSplits][kNumProvenances];
    // Scalar feature standardization per provenance, from the train split.
    std::array<double, kNumProvenances> norm_mean{0.0, 0.0, 0.0};
    std::array<double, kNumProvenances> norm_std{1.0, 1.0, 1.0};
};

// Renders every scene into all three provenances. Features are kept raw
// here; normalization stats are computed from the train split.
Dataset build_dataset(const DatasetConfig& cfg);

// Directory layout: manifest.json plus items/<split>/NNNN.<provenance>.qar.
void write_dataset(const std::string& dir, const Dataset& ds);
Dataset load_dataset(const std::string& dir);  // applies the stored normalization

std::vector<FeatureSequence>& dataset_items(Dataset& ds, Split s, Provenance p);
const std::vector<FeatureSequence>& dataset_items(const Dataset& ds, Split s, Provenance p);

// Conversions into training examples. The real baseline sees: four_mic ->
// the four planes concatenated per frame (4F); copied_mic / beamformed ->
// the single underlying channel's features (F).
QSequenceExample to_qexample(const FeatureSequence& fs);
RSequenceExample to_rexample(const FeatureSequence& fs);

}  // namespace quatnn
