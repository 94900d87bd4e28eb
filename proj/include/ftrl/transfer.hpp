#pragma once

#include <string>

#include "ftrl/env.hpp"

namespace ftrl {

// Scale adapter between one environment's native units and the federation's
// standard environment. beta converts native distances to standard meters;
// max_action is the native steering range a standardized action maps onto.
struct TransferProfile {
    std::string scale_label;
    double beta = 1.0;
    double max_action = 0.6;  // radians
    bool is_standard = false;
};

// Throws ValidationError unless beta > 0 and max_action > 0 (and, for the
// standard profile, beta == 1).
void validate_profile(const TransferProfile& profile);

// Standardizes a native observation: every entry multiplied by beta.
// Throws ValidationError on non-positive entries.
Observation transfer_observation(const Observation& native_obs, const TransferProfile& profile);

// Maps a standardized action in (-1, 1) onto native steering radians.
// Throws ValidationError when |standard_action| >= 1.
double transfer_action(double standard_action, const TransferProfile& profile);

}  // namespace ftrl
