# Import exceptions
from .exceptions  import *

# Import computational modules
from .risk_model  import *
from .chain_sim   import *
from .pool_model  import *
from .sweeps      import *

# Import the command line entry point
from .cli         import main
