# Copyright (c) 2023 Massachusetts Institute of Technology
# SPDX-License-Identifier: MIT
from cbilab.cli import main

if __name__ == "__main__":
    main()
