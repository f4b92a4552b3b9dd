#pragma once

#include <Eigen/Core>
#include <complex>
#include <vector>

#include "ocmusic/audio.hpp"

namespace ocmusic {

/// Hann-windowed magnitude STFT. Rows are frequency bins (F = frame/2 + 1),
/// columns are frames.
struct Spectrogram {
    Eigen::MatrixXd magnitudes;  // F x T, >= 0
    std::vector<double> freqs;   // Hz per bin
    int frame_size = 0;
    int hop_size = 0;
    int sample_rate = 0;

    int bins() const { return static_cast<int>(magnitudes.rows()); }
    int frames() const { return static_cast<int>(magnitudes.cols()); }
};

struct MelSpectrogram {
    Eigen::MatrixXd energies;  // M x T, >= 0
    int sample_rate = 0;
};

/// 12 x T pitch-class energies, each column scaled to unit max (silent
/// columns stay zero).
struct ChromaSequence {
    Eigen::MatrixXd vectors;  // 12 x T in [0, 1]
};

struct MfccSequence {
    Eigen::MatrixXd coeffs;  // K x T
};

/// In-place radix-2 FFT; size must be a power of two.
void fft_inplace(std::vector<std::complex<double>>& data, bool inverse);

Spectrogram stft(const AudioBuffer& audio, int frame_size, int hop_size);

/// Triangular HTK-mel filterbank applied to squared magnitudes.
MelSpectrogram mel_spectrogram(const Spectrogram& spec, int n_mels);

/// STFT-bin chroma over [55, 4000] Hz: bin energy accumulates onto pitch
/// class round(12*log2(f/440) + 69) mod 12.
ChromaSequence chroma(const Spectrogram& spec);

/// DCT-II of log(mel + 1e-10); coefficient 0 retained.
MfccSequence mfcc(const MelSpectrogram& mel, int n_coeffs);

/// Keep only spectral content in [lo_hz, hi_hz); windowed overlap-add
/// resynthesis at 50% hop. Output has the input's length.
AudioBuffer bandpass(const AudioBuffer& audio, double lo_hz, double hi_hz, int frame_size = 2048);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

}  // namespace ocmusic
