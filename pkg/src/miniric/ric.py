"""One-call assembly of the whole platform on a shared simulated clock."""

from __future__ import annotations

from typing import Optional

from .a1 import A1_ENDPOINT, A1_HTTP_ADDRESS, A1Mediator
from .appmgr import DEFAULT_GRACE_MS, DEFAULT_REGISTRATION_TIMEOUT_MS, AppMgr, ChartRepository, ImageCatalog
from .bus import MessageBus
from .clock import SimClock
from .demos import register_demo_images
from .e2 import E2Mgr, E2Term, NodeConfig, default_gnb
from .e2sm import TraceSource
from .framework import Platform
from .messages import (
    A1_POLICY_QUERY,
    A1_POLICY_RESP,
    NO_SUBID,
    RIC_CONTROL_REQ,
    RIC_SUB_DEL_FAILURE,
    RIC_SUB_DEL_REQ,
    RIC_SUB_DEL_RESP,
    RIC_SUB_FAILURE,
    RIC_SUB_REQ,
    RIC_SUB_RESP,
    registry_seed,
)
from .rest import HttpFabric, RestRouter, json_response
from .routes import MEID_ROUTE, RoutingTable, mse
from .sdl import Rnib, SdlClient, SdlStore
from .submgr import SUBMGR_ENDPOINT, SUBMGR_HTTP_ADDRESS, SubMgr

RTMGR_HTTP_ADDRESS = "service-ricplt-rtmgr-http.ricplt:3800"
DEBUG_INFO_URI = "/ric/v1/getdebuginfo"


def platform_routes() -> RoutingTable:
    """Static routes between platform components; xApp routes are added at registration."""
    to_a1 = [mse(m, NO_SUBID, A1_ENDPOINT) for m in (A1_POLICY_RESP, A1_POLICY_QUERY)]
    to_node = [mse(m, NO_SUBID, MEID_ROUTE) for m in (RIC_SUB_REQ, RIC_SUB_DEL_REQ, RIC_CONTROL_REQ)]
    to_submgr = [
        mse(m, NO_SUBID, SUBMGR_ENDPOINT) for m in (RIC_SUB_RESP, RIC_SUB_FAILURE, RIC_SUB_DEL_RESP, RIC_SUB_DEL_FAILURE)
    ]
    return RoutingTable(to_a1 + to_node + to_submgr, "platform")


class NearRtRic:
    """Clock, bus, HTTP fabric, SDL/RNIB, E2, A1, SubMgr and AppMgr wired together."""

    def __init__(
        self,
        *,
        strict_purge: bool = True,
        grace_period_ms: int = DEFAULT_GRACE_MS,
        registration_timeout_ms: int = DEFAULT_REGISTRATION_TIMEOUT_MS,
        workdir=None,
        chart_root=None,
        sdl_persist=None,
        demo_images: bool = True,
    ):
        self.clock = SimClock()
        self.registry = registry_seed()
        self.bus = MessageBus(self.registry, self.clock)
        self.bus.add_routes(platform_routes())
        self.fabric = HttpFabric()
        self.sdl = SdlStore(sdl_persist)
        self.rnib = Rnib(self.sdl)
        self.e2term = E2Term(self.bus)
        self.e2mgr = E2Mgr(self.e2term, self.rnib, self.clock)
        self.a1 = A1Mediator(self.bus)
        self.fabric.bind(A1_HTTP_ADDRESS, self.a1.router)
        self.submgr = SubMgr(self.bus, self.rnib, self.fabric)
        self.fabric.bind(SUBMGR_HTTP_ADDRESS, self.submgr.router)
        self.platform = Platform(self.bus, self.fabric, self.sdl, self.rnib)
        self.catalog = ImageCatalog()
        if demo_images:
            register_demo_images(self.catalog)
        self.repository = ChartRepository(chart_root)
        self.appmgr = AppMgr(
            self.platform,
            self.catalog,
            self.repository,
            self.submgr,
            grace_period_ms=grace_period_ms,
            registration_timeout_ms=registration_timeout_ms,
            strict_purge=strict_purge,
            workdir=workdir,
        )
        self.fabric.bind(RTMGR_HTTP_ADDRESS, self._rtmgr_router())

    def _rtmgr_router(self) -> RestRouter:
        r = RestRouter("rtmgr")
        r.add_handler("GET", "debuginfo", DEBUG_INFO_URI, lambda req: json_response(200, self.bus.debug_info()), raw=True)
        return r

    @property
    def now(self) -> int:
        return self.clock.now

    def advance(self, ms: int) -> None:
        self.clock.advance(ms)

    def add_gnb(self, plmn_id: str = "734", nodeb_id: str = "733", trace: Optional[TraceSource] = None) -> str:
        """E2 setup for a reference gNodeB; returns its inventory name (the meid)."""
        return self.e2mgr.e2_setup(default_gnb(plmn_id, nodeb_id, trace))

    def add_node(self, config: NodeConfig) -> str:
        return self.e2mgr.e2_setup(config)

    def sdl_client(self) -> SdlClient:
        return SdlClient(self.sdl)

    def debug_info(self) -> dict:
        return self.bus.debug_info()
