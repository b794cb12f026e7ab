// ctcpoly/ctcpoly.hpp
//
// Copyright 2026  The ctcpoly Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef CTCPOLY_CTCPOLY_HPP_
#define CTCPOLY_CTCPOLY_HPP_

#include "ctcpoly/common.hpp"
#include "ctcpoly/unitset.hpp"
#include "ctcpoly/features.hpp"
#include "ctcpoly/bottleneck.hpp"
#include "ctcpoly/ctc.hpp"
#include "ctcpoly/network.hpp"
#include "ctcpoly/trainer.hpp"
#include "ctcpoly/char_lm.hpp"
#include "ctcpoly/decoder.hpp"
#include "ctcpoly/scoring.hpp"
#include "ctcpoly/manifest.hpp"
#include "ctcpoly/synthetic.hpp"
#include "ctcpoly/experiment.hpp"

#endif  // CTCPOLY_CTCPOLY_HPP_
