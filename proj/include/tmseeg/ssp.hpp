#pragma once

#include <utility>

#include "tmseeg/core.hpp"
#include "tmseeg/leadfield.hpp"

namespace tmseeg {

struct ArtifactSubspace {
    Eigen::MatrixXd basis;  ///< channels x k, orthonormal columns; zero rows on bad channels
    int k = 0;
    std::pair<double, double> source_window{0.005, 0.050};
    double highpass_hz = 30.0;
};

/// Top-k left singular vectors of the high-passed post-pulse window pooled
/// over good trials. `highpass_hz <= 0` skips the high-pass.
ArtifactSubspace estimate_artifact_subspace(const EpochSet& epochs, std::pair<double, double> window,
                                            double highpass_hz, int k);

/// P = I - B B^T.
ChannelOperator make_projector(const ArtifactSubspace& s);

/// Left-multiplies every trial by P and records the rank loss.
EpochSet apply_ssp(const EpochSet& epochs, const ChannelOperator& p);

/// L (PL)^T (PL (PL)^T + mu I)^-1 over the good channels, mu = lambda *
/// tr(PL (PL)^T) / n_good. Bad-channel rows are reconstructed through L.
ChannelOperator sir_operator(const ChannelOperator& p, const LeadField& lf, const Montage& channels, double lambda);

/// Source-informed reconstruction of SSP-projected epochs.
EpochSet apply_sir(const EpochSet& projected, const ChannelOperator& p, const LeadField& lf, double lambda);

}  // namespace tmseeg
