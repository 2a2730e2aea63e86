# Copyright (c) 2023 Massachusetts Institute of Technology
# SPDX-License-Identifier: MIT
