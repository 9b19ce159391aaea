import multiprocessing
import sys

from cli.app import main

if __name__ == "__main__":
    # candidate pools in sampler.workers use spawn as well
    multiprocessing.set_start_method("spawn", force=True)
    sys.exit(main())
