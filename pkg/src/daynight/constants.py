import os

from dulwich.repo import NotGitRepository, Repo

from daynight.logging import configure_logging

logger = configure_logging("daynight.constants")


def get_git_repo_root(path="."):
    try:
        repo = Repo.discover(start=path)
        git_root = repo.path
        return os.path.normpath(git_root)
    except NotGitRepository:
        git_repo_not_found = "Not inside a Git repository. Returning '.'"
        logger.debug(git_repo_not_found)
        return os.path.normpath(path)


repo_root = get_git_repo_root()

DEFAULT_OUTPUT_DIR = os.path.join(repo_root, "outputs", "deployments")
DEFAULT_SOURCE_CHECKPOINT = os.path.join(repo_root, "outputs", "source.dyna")

# Binary formats
CHECKPOINT_MAGIC = b"DYNA"
CHECKPOINT_VERSION = 1
SAMPLE_MAGIC = b"DSMP"

# Numerics
BN_EPS = 1e-5
BN_MOMENTUM = 0.1
BCE_CLAMP = 1e-7
IMAG_RESIDUE_TOL = 1e-6

logger.debug(f"Default output directory: {DEFAULT_OUTPUT_DIR}")

if __name__ == "__main__":
    from pprint import pprint

    pprint(DEFAULT_OUTPUT_DIR)
    pprint(DEFAULT_SOURCE_CHECKPOINT)
