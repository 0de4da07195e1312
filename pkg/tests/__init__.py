from . import Utils
