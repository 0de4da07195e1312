# -*- coding: utf-8 -*-
"""Package version from `git describe`, falling back on the _version.py file

The _version.py file is rewritten whenever git gives a version, so that
unpacked release tarballs (with no git tree) still know their version.
Do not check _version.py into git.
"""

import os
import re
import subprocess

__all__ = ("get_git_version",)

_VERSION_FILE = os.path.join('KIPAC', 'quantRelax', '_version.py')


def _dirname():
    return os.path.abspath(os.path.dirname(__file__))


def render_pep440(vcs):
    """Convert a git describe string (tag-count-hash[-dirty]) into a PEP440 local version"""
    if vcs is None:
        return None
    tags = vcs.split('-')
    if len(tags) == 1:
        return tags[0]
    return tags[0] + '+' + '.'.join(tags[1:])


def call_git_describe(abbrev=4):
    """Return the `git describe` output, `None` outside of a git tree"""
    try:
        line = subprocess.check_output(['git', 'describe', '--abbrev=%d' % abbrev, '--dirty', '--tags'],
                                       cwd=_dirname(), stderr=subprocess.DEVNULL)
    except (OSError, subprocess.CalledProcessError):
        return None
    return line.strip().decode('utf-8')


def read_release_version():
    """Read __version__ from the package _version.py, `None` if missing"""
    try:
        with open(os.path.join(_dirname(), _VERSION_FILE), 'rt') as fin:
            for line in fin:
                match = re.match("__version__ = '([^']+)'", line)
                if match:
                    return match.group(1)
    except OSError:
        return None
    return None


def write_release_version(version):
    """Write __version__ to the package _version.py"""
    with open(os.path.join(_dirname(), _VERSION_FILE), 'wt') as fout:
        fout.write("__version__ = '%s'\n" % version)


def get_git_version(abbrev=4):
    """The git version if available, else the recorded release version, else 'unknown'"""
    release_version = read_release_version()
    git_version = render_pep440(call_git_describe(abbrev))
    if git_version is not None:
        if git_version != release_version:
            write_release_version(git_version)
        return git_version
    if release_version is not None:
        return release_version
    return 'unknown'


if __name__ == "__main__":
    print(get_git_version())
