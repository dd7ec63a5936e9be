"""Ciphertext-policy attribute-based encryption over ring LWE.

Submodules: ``ring`` (R_q arithmetic and samplers), ``policy`` (access trees
and secret sharing), ``scheme`` (Setup/KeyGen/Enc/Dec), ``game`` (IND-CPA game
and R-LWE reduction harness), ``codec`` (binary envelopes) and ``cli``.
"""

from .errors import (AbeError, CombineAborted, ConfigurationError, DecodeError,
                     DecryptionFailed, NotAuthorized, NotInvertible, PolicyError,
                     PolicySyntaxError, SetupFailure)
from .policy import AccessTree, Inner, Leaf, evaluate, format_policy, parse_policy
from .ring import DESK, TOY, InverseConvention, Noise, Params, RingElement, SchemeMode
from .scheme import (Ciphertext, IdentityRegistry, MasterSecretKey, PublicKey,
                     UserSecretKey, decrypt, encrypt, keygen, message_embed,
                     message_extract, setup)

__version__ = "0.1.0"
