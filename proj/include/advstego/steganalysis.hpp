#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>

#include "advstego/tensor.hpp"

// Classical LSB steganalysis detectors, AUC scoring and SSIM.
namespace advstego::steganalysis {

/// Mean SSIM over all 8x8 windows (stride 1, uniform weights), averaged
/// over channels. C1 = 0.01^2, C2 = 0.03^2 for pixels in [0,1]. Images
/// smaller than 8 pixels on a side use the whole side as the window.
double ssim(const Image& a, const Image& b);

/// (1 - ssim) * 100.
double ssim_loss_percent(const Image& a, const Image& b);

/// Sample pair analysis estimate of the LSB replacement rate. One estimate
/// per channel and direction (horizontal, vertical pairs), averaged. A
/// negative discriminant gives 0 for that estimate; never negative.
double spa_score(const Image& img);

/// Pair-of-values chi-square attack over the 8-bit histogram of all
/// channels: the p-value of the hypothesis that h[2i] and h[2i+1] are
/// equalised. Close to 1 for fully LSB-replaced images.
double lsb_chi_square_score(const Image& img);

/// Rank AUC (Mann-Whitney) with average ranks for ties. `positive[i]` marks
/// the stego class. Throws std::invalid_argument unless both classes occur.
double auc_roc(std::span<const double> scores, std::span<const bool> positive);

}  // namespace advstego::steganalysis
