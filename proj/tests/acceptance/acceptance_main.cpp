#include <cstdlib>
#include <cstring>
#include <iostream>

#include "heatflow/acceptance.hpp"

/// Standalone gate: runs the eleven acceptance checks and exits nonzero if
/// any fails. Optional argument --tolerance-scale=<x> loosens every
/// tolerance and budget by x for diagnostic reruns.
int main(int argc, char** argv) {
    double scale = 1.0;
    for (int i = 1; i < argc; ++i) {
        const char* prefix = "--tolerance-scale=";
        if (std::strncmp(argv[i], prefix, std::strlen(prefix)) == 0) {
            scale = std::atof(argv[i] + std::strlen(prefix));
            if (!(scale > 0.0)) {
                std::cerr << "invalid tolerance scale\n";
                return 2;
            }
        } else {
            std::cerr << "usage: heatflow_acceptance [--tolerance-scale=<x>]\n";
            return 2;
        }
    }
    const auto summary = heatflow::accept::run_acceptance(std::cout, scale);
    return summary.all_pass() ? 0 : 1;
}
