from fastmcp import FastMCP


_INSTRUCTIONS = """MCP server for variational time discretizations VTD(r,k) of M u' = F(t, u)"""

MAX_DEGREE = 12
MAX_INTERVALS = 4096
DEFAULT_SAMPLES_PER_INTERVAL = 11

mcp = FastMCP(
    name="vtd-timestepping",
    instructions=_INSTRUCTIONS,
)
