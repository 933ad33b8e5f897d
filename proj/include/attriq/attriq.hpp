#pragma once

#include "attriq/attribution.hpp"
#include "attriq/autodiff.hpp"
#include "attriq/checkpoint.hpp"
#include "attriq/csv.hpp"
#include "attriq/datasets.hpp"
#include "attriq/error.hpp"
#include "attriq/fixtures.hpp"
#include "attriq/grad_check.hpp"
#include "attriq/instance.hpp"
#include "attriq/models.hpp"
#include "attriq/parallel.hpp"
#include "attriq/report.hpp"
#include "attriq/resources.hpp"
#include "attriq/robustness.hpp"
#include "attriq/table.hpp"
#include "attriq/tensor.hpp"
#include "attriq/train.hpp"
#include "attriq/version.hpp"
#include "attriq/vocabulary.hpp"
