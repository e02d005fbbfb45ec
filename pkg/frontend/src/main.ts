/** Console entry point: session form, device table, live charts, controls. */

import { ApiError, CloudApi } from "./api.js";
import { clearConfig, loadConfig, saveConfig } from "./config.js";
import { validateCurtailPercent } from "./validation.js";
import { CurveEditorView } from "./views/curve.js";
import { describe, DeviceListView } from "./views/devices.js";
import { TelemetryView } from "./views/telemetry.js";

const app = document.getElementById("app")!;

function toast(text: string, ok = true): void {
  const el = document.createElement("div");
  el.className = `toast ${ok ? "ok" : "bad"}`;
  el.textContent = text;
  document.body.appendChild(el);
  setTimeout(() => el.remove(), 5000);
}

function renderLogin(message = ""): void {
  const previous = loadConfig();
  app.innerHTML = `
    <section class="login">
      <h1>gridgate operator console</h1>
      ${message ? `<p class="error">${message}</p>` : ""}
      <label>cloud base URL
        <input id="base-url" value="${previous?.baseUrl ?? "http://127.0.0.1:8440"}" />
      </label>
      <label>operator token
        <input id="token" type="password" value="${previous?.token ?? ""}" />
      </label>
      <button id="connect">connect</button>
    </section>`;
  document.getElementById("connect")!.addEventListener("click", () => {
    const baseUrl = (document.getElementById("base-url") as HTMLInputElement).value.trim();
    const token = (document.getElementById("token") as HTMLInputElement).value.trim();
    if (!baseUrl || !token) {
      renderLogin("both fields are required");
      return;
    }
    saveConfig({ baseUrl, token });
    renderConsole();
  });
}

function renderConsole(): void {
  const config = loadConfig();
  if (!config) {
    renderLogin();
    return;
  }
  let api: CloudApi;
  try {
    api = new CloudApi(config.baseUrl, config.token);
  } catch (error) {
    renderLogin(describe(error));
    return;
  }

  app.innerHTML = `
    <header>
      <h1>gridgate operator console</h1>
      <span class="muted">${config.baseUrl}</span>
      <button id="logout">disconnect</button>
    </header>
    <main>
      <section class="panel">
        <h2>gateways</h2>
        <div id="devices"></div>
      </section>
      <section class="panel">
        <h2>live telemetry <span id="selected" class="muted">select a gateway</span></h2>
        <div id="charts" class="charts"></div>
      </section>
      <section class="panel">
        <h2>curtail active power</h2>
        <div class="curtail">
          <input id="percent" placeholder="percent (0, 100]" value="50" />
          <button id="curtail" disabled>curtail</button>
          <span id="percent-error" class="error"></span>
        </div>
      </section>
      <section class="panel">
        <h2>volt-var curve</h2>
        <div id="curve"></div>
      </section>
    </main>`;

  document.getElementById("logout")!.addEventListener("click", () => {
    clearConfig();
    telemetry.hide();
    devices.stop();
    renderLogin();
  });

  let selected: string | null = null;
  let selectedOnline = false;

  const telemetry = new TelemetryView(document.getElementById("charts")!, api, (t) => toast(t, false));
  const curveEditor = new CurveEditorView(
    document.getElementById("curve")!,
    api,
    () => selected,
    () => telemetry.latestVoltage(),
    toast,
  );
  const devices = new DeviceListView(document.getElementById("devices")!, api, {
    onSelect: (gatewayId) => {
      selected = gatewayId;
      document.getElementById("selected")!.textContent = gatewayId;
      void telemetry.show(gatewayId).catch((e) => toast(describe(e), false));
      void api
        .device(gatewayId)
        .then((d) => {
          selectedOnline = d.status === "online" || d.status === "degraded";
          updateCurtail();
          curveEditor.update();
        })
        .catch(() => undefined);
    },
    onAuthFailure: () => {
      telemetry.hide();
      renderLogin("session rejected (401): check the operator token");
    },
  });

  const percentInput = document.getElementById("percent") as HTMLInputElement;
  const curtailButton = document.getElementById("curtail") as HTMLButtonElement;
  const percentError = document.getElementById("percent-error")!;

  function updateCurtail(): void {
    const problem = validateCurtailPercent(percentInput.value);
    percentError.textContent = problem ?? "";
    curtailButton.disabled = problem !== null || selected === null || !selectedOnline;
  }

  percentInput.addEventListener("input", updateCurtail);
  curtailButton.addEventListener("click", () => {
    if (!selected) {
      return;
    }
    const percent = Number(percentInput.value);
    curtailButton.disabled = true;
    api
      .invoke(selected, "curtailPower", { percent })
      .then((invocation) => {
        if (invocation.state === "completed") {
          toast(`curtailed ${selected} to ${percent}%`);
        } else {
          toast(`curtail ${invocation.state}: ${JSON.stringify(invocation.response?.body)}`, false);
        }
      })
      .catch((error) => {
        // 409 offline / 504 timeout surfaced verbatim
        toast(error instanceof ApiError ? `${error.status}: ${error.message}` : describe(error), false);
      })
      .finally(updateCurtail);
  });

  devices.start();
  curveEditor.render();
  updateCurtail();
}

renderConsole();
