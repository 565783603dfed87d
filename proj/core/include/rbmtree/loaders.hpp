#pragma once

#include "rbmtree/dataset.hpp"

#include <string>

namespace rbmtree {

/// Whitespace-separated integer matrix, one sample per line.
/// n_states <= 0: inferred as max entry + 1 (at least 2).
OneHotDataset load_matrix(const std::string &path, int n_states = -1);
void save_matrix(const std::string &path, const OneHotDataset &data);

/// Gray images as rows of pixel intensities in [0,1]; strictly-above-threshold
/// pixels map to state 1.
OneHotDataset binarize_images(const Eigen::MatrixXd &pixels, double threshold);

/// 20 amino acids in conventional order, then the gap.
inline constexpr char kAminoAlphabet[] = "ACDEFGHIKLMNPQRSTVWY-";
inline constexpr int kAminoStates = 21;

/// Index in kAminoAlphabet; unknown symbols map to the gap index (20) and
/// are reported through n_unknown in load_fasta_msa.
int amino_index(char symbol);
char amino_symbol(int index);

/// Aligned FASTA to a 21-state dataset; record ids become labels.
OneHotDataset load_fasta_msa(const std::string &path, int *n_unknown = nullptr);

} // namespace rbmtree
