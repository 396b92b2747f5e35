jdata {
   	int saveState as logger;
   	int recoveryState as broadcaster;
}
jcond {
   	fogRun: sys.type == "fog";
   	cloudRun: sys.type == "cloud";
}
var computation;
jasync function {fogRun} fogCompute() {
   	// assign progress update

   	saveState.log(computation);

   	var oldProgress = recoveryState.getLastValue();
   	if(oldProgress > computation) {
      		computation = oldProgress;
   	}
}
var saveStateLog;
jasync function {cloudRun} cloudCheck() {
   	var newUpdate = saveState[0].getLastValue();
   	if(newUpdate) < saveStateLog) {
      		recoveryState.broadcast(saveStateLog);
   	} else {
      		saveStateLog = newUpdate;
   	}
}
