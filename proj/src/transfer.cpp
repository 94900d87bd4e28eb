#include "ftrl/transfer.hpp"

#include <cmath>
#include <string>

namespace ftrl {

void validate_profile(const TransferProfile& profile) {
    if (!(profile.beta > 0.0)) {
        throw ValidationError("profile '" + profile.scale_label + "': beta must be positive");
    }
    if (!(profile.max_action > 0.0)) {
        throw ValidationError("profile '" + profile.scale_label + "': max_action must be positive");
    }
    if (profile.is_standard && profile.beta != 1.0) {
        throw ValidationError("profile '" + profile.scale_label +
                              "': the standard profile must have beta = 1");
    }
}

Observation transfer_observation(const Observation& native_obs, const TransferProfile& profile) {
    Observation out;
    for (std::size_t i = 0; i < native_obs.size(); ++i) {
        if (!(native_obs[i] > 0.0)) {
            throw ValidationError("transfer_observation: non-positive distance at beam " +
                                  std::to_string(i));
        }
        out[i] = profile.beta * native_obs[i];
    }
    return out;
}

double transfer_action(double standard_action, const TransferProfile& profile) {
    if (!(std::abs(standard_action) < 1.0)) {
        throw ValidationError("transfer_action: |action| must be < 1, got " +
                              std::to_string(standard_action));
    }
    return standard_action * profile.max_action;
}

}  // namespace ftrl
