// Loopback stress solver speaking the external-oracle protocol: reads one
// request from stdin, answers on stdout. Lets the external adapter be tested
// end to end against the synthetic truth it wraps.

#include <CLI11.hpp>

#include <iostream>
#include <iterator>
#include <string>

#include "baygds/mechanics.hpp"
#include "baygds/oracle.hpp"

int main(int argc, char** argv) {
  CLI::App app{"loopback solver for the external oracle protocol"};
  std::string features_path;
  std::uint64_t seed = 99;
  double noise = 1e-2;
  double mismatch = 0.0;
  app.add_option("--features", features_path, "features csv with design coordinates")
      ->required();
  app.add_option("--seed", seed, "truth seed");
  app.add_option("--noise", noise, "stress noise stddev");
  app.add_option("--mismatch", mismatch, "model-mismatch amplitude");
  CLI11_PARSE(app, argc, argv);

  try {
    std::string request((std::istreambuf_iterator<char>(std::cin)),
                        std::istreambuf_iterator<char>());
    const auto req = baygds::decode_oracle_request(request);

    std::vector<baygds::DeformationState> states;
    states.reserve(req.F.size());
    for (const auto& F : req.F) {
      baygds::DeformationState st;
      st.path = baygds::LoadPath::TensionX;  // placeholder, unused by the solver
      st.F = F;
      const auto inv = baygds::invariants(F);
      st.I1 = inv.I1;
      st.I4 = inv.I4;
      st.I6 = inv.I6;
      states.push_back(st);
    }

    const auto table = baygds::load_features_csv(features_path);
    baygds::SyntheticOracleConfig cfg;
    cfg.seed = seed;
    cfg.noise_std = noise;
    cfg.mismatch_amplitude = mismatch;
    baygds::SyntheticOracle oracle(table, cfg);

    const auto stresses = oracle.evaluate(req.design, states);
    std::cout << baygds::encode_oracle_response(req.design.id, stresses) << std::endl;
    return 0;
  } catch (const baygds::user_error& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  }
}
