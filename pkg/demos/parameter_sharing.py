"""How big is a forecaster whose LSTM reads one scalar at a time?

The shared cell sees a single coordinate per step, so its size depends only
on the hidden width H.  A conventional LSTM over whole frames grows with the
square of the feature size.
"""
from fmrnn.featmap import ForecasterModel, lstm_cell_count, param_count

for d in (128, 512, 2048):
    pc = param_count(ForecasterModel(d, 128, 64, hidden=4))
    print(f"d={d:5d}  scalar cell {pc.cell:4d}  readout {pc.readout:2d}  total {pc.exact}")

# the usual back-of-envelope figure for that cell leaves out the recurrent
# weights, which is why it comes out smaller than what is actually stored
pc = param_count(ForecasterModel(2048, 128, 64, hidden=4))
print(f"\nquoted {pc.approx_formula_text} = {pc.approx_formula}, stored {pc.cell}")

vanilla = lstm_cell_count(2048, 512)
print(f"vanilla LSTM, d=2048, H=512: {vanilla:,} parameters "
      f"({vanilla / pc.cell:,.0f} times the shared cell)")

# an RBF readout swaps the H+1 linear weights for n kernels of H+2 numbers each
rbf = param_count(ForecasterModel(2048, 128, 64, hidden=4, readout="rbf"))
print(f"with a 6-kernel RBF readout: {rbf.exact} in total")
