#include "rbmtree/loaders.hpp"

#include "rbmtree/checkpoint.hpp"

#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace rbmtree {

OneHotDataset load_matrix(const std::string &path, int n_states) {
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error("load_matrix: cannot open " + path);

  std::vector<std::vector<int>> rows;
  int max_entry = 0;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::vector<int> row;
    int x;
    while (ls >> x) {
      if (x < 0)
        throw std::runtime_error("load_matrix: negative entry in " + path);
      max_entry = std::max(max_entry, x);
      row.push_back(x);
    }
    if (!ls.eof())
      throw std::runtime_error("load_matrix: non-integer token in " + path);
    if (row.empty())
      continue;
    if (!rows.empty() && row.size() != rows.front().size())
      throw std::runtime_error("load_matrix: ragged rows in " + path);
    rows.push_back(std::move(row));
  }
  if (rows.empty())
    throw std::runtime_error("load_matrix: no samples in " + path);

  if (n_states <= 0)
    n_states = std::max(max_entry + 1, 2);
  else if (max_entry >= n_states)
    throw std::runtime_error("load_matrix: entry out of range in " + path);

  Eigen::MatrixXi states(static_cast<int>(rows.size()),
                         static_cast<int>(rows.front().size()));
  for (int s = 0; s < states.rows(); ++s)
    for (int i = 0; i < states.cols(); ++i)
      states(s, i) = rows[s][i];
  return OneHotDataset::from_states(states, n_states);
}

void save_matrix(const std::string &path, const OneHotDataset &data) {
  data.validate();
  std::ostringstream out;
  for (int s = 0; s < data.n_samples; ++s) {
    for (int i = 0; i < data.n_visible; ++i) {
      if (i > 0)
        out << ' ';
      out << data.states(s, i);
    }
    out << '\n';
  }
  write_file_atomic(path, out.str());
}

OneHotDataset binarize_images(const Eigen::MatrixXd &pixels, double threshold) {
  if (!(threshold > 0.0) || !(threshold < 1.0))
    throw std::invalid_argument("binarize_images: threshold must be in (0,1)");
  if (pixels.size() == 0)
    throw std::invalid_argument("binarize_images: empty input");
  Eigen::MatrixXi states =
      (pixels.array() > threshold).cast<int>();
  return OneHotDataset::from_states(states, 2);
}

int amino_index(char symbol) {
  for (int k = 0; k < kAminoStates; ++k)
    if (kAminoAlphabet[k] == symbol)
      return k;
  return kAminoStates - 1; // gap
}

char amino_symbol(int index) {
  if (index < 0 || index >= kAminoStates)
    throw std::out_of_range("amino_symbol: index out of range");
  return kAminoAlphabet[index];
}

OneHotDataset load_fasta_msa(const std::string &path, int *n_unknown) {
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error("load_fasta_msa: cannot open " + path);

  std::vector<std::string> ids;
  std::vector<std::string> seqs;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    if (line.empty())
      continue;
    if (line[0] == '>') {
      ids.push_back(line.substr(1));
      seqs.emplace_back();
    } else {
      if (seqs.empty())
        throw std::runtime_error("load_fasta_msa: sequence before header in " +
                                 path);
      seqs.back() += line;
    }
  }
  if (seqs.empty())
    throw std::runtime_error("load_fasta_msa: no records in " + path);
  for (const auto &s : seqs)
    if (s.empty() || s.size() != seqs.front().size())
      throw std::runtime_error("load_fasta_msa: sequences not aligned in " +
                               path);

  const int m = static_cast<int>(seqs.size());
  const int nv = static_cast<int>(seqs.front().size());
  int unknown = 0;
  Eigen::MatrixXi states(m, nv);
  for (int s = 0; s < m; ++s)
    for (int i = 0; i < nv; ++i) {
      const char c = seqs[s][i];
      const int q = amino_index(c);
      if (q == kAminoStates - 1 && c != '-')
        ++unknown;
      states(s, i) = q;
    }
  if (n_unknown)
    *n_unknown = unknown;

  OneHotDataset data = OneHotDataset::from_states(states, kAminoStates);
  data.labels = std::move(ids);
  return data;
}

} // namespace rbmtree
