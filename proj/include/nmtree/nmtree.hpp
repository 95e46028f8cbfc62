#ifndef NMTREE_NMTREE_HPP
#define NMTREE_NMTREE_HPP

#include "nmtree/adam.hpp"
#include "nmtree/assembler.hpp"
#include "nmtree/autodiff.hpp"
#include "nmtree/checkpoint.hpp"
#include "nmtree/config.hpp"
#include "nmtree/conllu.hpp"
#include "nmtree/explain.hpp"
#include "nmtree/gradcheck.hpp"
#include "nmtree/model.hpp"
#include "nmtree/modules.hpp"
#include "nmtree/params.hpp"
#include "nmtree/parse_tree.hpp"
#include "nmtree/rng.hpp"
#include "nmtree/synthetic.hpp"
#include "nmtree/tensor.hpp"
#include "nmtree/training.hpp"
#include "nmtree/tree_encoder.hpp"
#include "nmtree/vocab.hpp"

#endif  // NMTREE_NMTREE_HPP
