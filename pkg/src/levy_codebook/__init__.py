"""Option surfaces driven by Levy codebooks.

A codebook ``Psi_t(T, u)`` is a maturity-indexed family of Levy exponents;
``exp(int_t^T Psi_t(r, u) dr)`` is the conditional characteristic function of
the log price at ``T``.  The package prices calls from codebooks and back,
evolves codebooks pathwise under subordinator noise, and validates risk
neutrality by Monte Carlo.
"""
from .codebook import *  # noqa: F401,F403
from .dynamics import *  # noqa: F401,F403
from .errors import *  # noqa: F401,F403
from .estimators import CodebookRegressor
from .levy import *  # noqa: F401,F403
from .models import *  # noqa: F401,F403
from .pricing import *  # noqa: F401,F403
from .validation import *  # noqa: F401,F403

__version__ = "0.1.0"
