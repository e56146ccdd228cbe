#pragma once

#include <string>

#include "mfsg/model.hpp"

namespace mfsg_test {

// The experiment parameter set used across the integration-style tests.
inline std::string experiment_config(int steps = 1000, int agents = 300, int paths = 200,
                                     unsigned long long seed = 424242) {
    std::string text;
    auto put = [&text](const char* k, const std::string& v) {
        text += std::string(k) + " = " + v + "\n";
    };
    put("A0", "0.1");
    put("B0", "5");
    put("C0", "1");
    put("D0", "1");
    put("E0", "0.5");
    put("F0", "1");
    put("Ct0", "1");
    put("Dt0", "1");
    put("Ft0", "1");
    put("b0", "1");
    put("sigma0", "1");
    put("sigmat0", "1");
    put("A1", "-2");
    put("B1", "5");
    put("C1", "1");
    put("D1", "1");
    put("E1", "1");
    put("F1", "1");
    put("Ct1", "1");
    put("Dt1", "1");
    put("Ft1", "1");
    put("b1", "1");
    put("sigma1", "1");
    put("sigmat1", "1");
    put("Q0", "1");
    put("R0", "1");
    put("Q1", "1");
    put("R1", "1");
    put("G0", "0.05");
    put("G1", "0.3");
    put("lambda", "0.5");
    put("xi", "0.5");
    put("xi0", "0.5");
    put("T_horizon", "1");
    put("steps", std::to_string(steps));
    put("agents_N", std::to_string(agents));
    put("mc_paths", std::to_string(paths));
    put("seed", std::to_string(seed));
    return text;
}

// All-zero dynamics and costs on [0, 1]; handy degenerate baseline.
inline mfsg::ModelCoefficients zero_model() {
    mfsg::ModelCoefficients m;
    m.T = 1.0;
    return m;
}

inline mfsg::LoadedConfig experiment_loaded(int steps = 1000, int agents = 300, int paths = 200,
                                            unsigned long long seed = 424242) {
    return mfsg::load_config(experiment_config(steps, agents, paths, seed));
}

}  // namespace mfsg_test
