"""Split-carrier watermarking for small convolutional networks.

The heavy lifting lives in the compiled `_hufu` extension; this package
re-exports its public surface.
"""

from ._hufu import *  # noqa: F401,F403
