#pragma once

#include <string>
#include <vector>

#include "phaze/workload.hpp"

namespace phaze {

// Shape of a synthetic decoder-only transformer.
struct TransformerSpec {
  std::string name = "transformer";
  int layers = 24;
  std::int64_t hidden = 1024;
  std::int64_t heads = 16;
  std::int64_t seq_len = 1024;
  Bytes word_size = 2;
  TrainingParams training;
};

// Operator graph of one transformer block sliced t ways at microbatch b:
// layer norm, q/k/v projections, attention scores, softmax, attention-value
// product, output projection, residual add, layer norm, fused fc1 + gelu,
// fc2 and the second residual add.
OperatorGraph transformer_block_graph(const TransformerSpec& spec, int t, int b);

// One layer per block with every (t, b) variant of the training parameters.
Workload generate_transformer(const TransformerSpec& spec);

// Concatenates graphs into one chain: every sink of a graph feeds every
// source of the next. Operator ids get a "g<index>." prefix.
OperatorGraph chain_graphs(const std::vector<OperatorGraph>& parts);

}  // namespace phaze
