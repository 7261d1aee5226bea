#pragma once

// Environments shared across the test suites.

#include "bpre/environment.hpp"
#include "bpre/offspring.hpp"

namespace test_envs {

// log-mean walk +-log 2 with weights 2/3, 1/3: Lambda has a closed form
inline bpre::EnvironmentLaw walk_two_point() {
  return bpre::EnvironmentLaw(
      {2.0 / 3.0, 1.0 / 3.0},
      {bpre::OffspringDistribution(bpre::LinearFractionalOffspring(2.0, 8.0)),
       bpre::OffspringDistribution(
           bpre::LinearFractionalOffspring(0.5, 1.0))});
}

// linear fractional environment, means {2, 0.9} with equal weights
inline bpre::EnvironmentLaw lf_two_point() {
  return bpre::EnvironmentLaw(
      {0.5, 0.5},
      {bpre::OffspringDistribution(bpre::LinearFractionalOffspring(2.0, 8.0)),
       bpre::OffspringDistribution(
           bpre::LinearFractionalOffspring(0.9, 1.0))});
}

// constant environment with offspring pmf {1/4, 1/4, 1/2}
inline bpre::EnvironmentLaw gw_quarter() {
  return bpre::EnvironmentLaw(
      {1.0}, {bpre::OffspringDistribution(
                 bpre::FiniteSupportOffspring({0.25, 0.25, 0.5}))});
}

// two-point environment with support {0,1,2} laws, small enough for exact
// enumeration
inline bpre::EnvironmentLaw enumerable_two_point() {
  return bpre::EnvironmentLaw(
      {0.7, 0.3},
      {bpre::OffspringDistribution(
           bpre::FiniteSupportOffspring({0.25, 0.25, 0.5})),
       bpre::OffspringDistribution(
           bpre::FiniteSupportOffspring({0.4, 0.3, 0.3}))});
}

// every individual leaves at least one child; E[Q(1)] = 1/2
inline bpre::EnvironmentLaw no_extinction_support12() {
  return bpre::EnvironmentLaw(
      {1.0}, {bpre::OffspringDistribution(
                 bpre::FiniteSupportOffspring({0.0, 0.5, 0.5}))});
}

// deterministic environment: single law with mean 2
inline bpre::EnvironmentLaw deterministic_mean2() {
  return bpre::EnvironmentLaw(
      {1.0},
      {bpre::OffspringDistribution(bpre::LinearFractionalOffspring(2.0, 8.0))});
}

}  // namespace test_envs
