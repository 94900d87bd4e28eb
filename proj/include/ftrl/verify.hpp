#pragma once

#include <ostream>

namespace ftrl {

// Built-in oracle/property battery behind `ftrl verify`: reward formula vs a
// brute-force re-evaluation, analytic gradients vs central finite
// differences, FedAvg vs an elementwise mean, transfer round-trips, envelope
// codec round-trips and header-corruption detection, flatten bijectivity.
// Prints one line per check; returns true when everything passed.
bool run_verification(std::ostream& out);

}  // namespace ftrl
